/**
 * Infinite-canvas node editor: pannable surface, draggable node cards with
 * output panels, SVG edge paths, and port-to-port edge drawing with the
 * legality matrix enforced before any command leaves the client.
 */

import { edgeAllowed, inputPorts, producesDocLists } from './legality.js';
import type { EdgeView, NodeView } from './model.js';
import type { NodeKind, OutputPage, Port } from './types.js';

export interface CanvasCallbacks {
  onMoveNode(nodeId: string, x: number, y: number): void;
  onConnect(fromNode: string, toNode: string, port: Port): void;
  onIllegalConnect(fromNode: string, toNode: string, port: Port): void;
  onRemoveNode(nodeId: string): void;
  onOpenDocument(docId: string): void;
  onDropDocument(docId: string, x: number, y: number): void;
  onDropDocumentOnGroup(docId: string, groupId: string): void;
  onSelectNode(nodeId: string | null): void;
  onPageOutput(nodeId: string, offset: number): void;
}

interface DragState {
  nodeId: string;
  offsetX: number;
  offsetY: number;
  moved: boolean;
}

interface WireState {
  fromNode: string;
  port: Port;
}

const KIND_BADGES: Record<NodeKind, string> = {
  Document: 'DOC',
  Search: 'SRCH',
  Group: 'GRP',
  Note: 'NOTE',
  Rank: 'RANK',
  Projection: 'PROJ',
  Union: 'UNION',
  Intersection: 'INTER',
  Difference: 'DIFF',
};

export class CanvasView {
  private readonly surface: HTMLElement;
  private readonly edgeLayer: SVGSVGElement;
  private drag: DragState | null = null;
  private wire: WireState | null = null;
  private panX = 0;
  private panY = 0;
  private selected: string | null = null;
  /** node views from the last render, for hit-testing and wiring */
  private current = new Map<string, NodeView>();
  private outputs = new Map<string, OutputPage>();
  private pendingSpinners = new Set<string>();
  private staleNodes = new Set<string>();

  constructor(
    private readonly root: HTMLElement,
    private readonly callbacks: CanvasCallbacks,
  ) {
    this.root.classList.add('cf-canvas');
    this.edgeLayer = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
    this.edgeLayer.classList.add('cf-edges');
    this.surface = document.createElement('div');
    this.surface.className = 'cf-surface';
    this.root.append(this.edgeLayer, this.surface);
    this.bindPan();
    this.bindDrop();
  }

  setOutput(nodeId: string, page: OutputPage): void {
    this.outputs.set(nodeId, page);
    this.pendingSpinners.delete(nodeId);
  }

  setPending(nodeId: string): void {
    this.pendingSpinners.add(nodeId);
  }

  setStale(nodeIds: Iterable<string>): void {
    this.staleNodes = new Set(nodeIds);
  }

  select(nodeId: string | null): void {
    this.selected = nodeId;
    this.callbacks.onSelectNode(nodeId);
  }

  get selectedNode(): string | null {
    return this.selected;
  }

  /** Arrow-key node cycling for keyboard-first exploration. */
  cycleSelection(step: 1 | -1): void {
    const ids = [...this.current.keys()];
    if (ids.length === 0) return;
    const at = this.selected ? ids.indexOf(this.selected) : -1;
    const next = ids[(at + step + ids.length) % ids.length];
    this.select(next);
    this.renderSelection();
  }

  render(nodes: Map<string, NodeView>, edges: Map<string, EdgeView>): void {
    this.current = nodes;
    this.surface.replaceChildren();
    for (const node of nodes.values()) this.surface.append(this.renderNode(node));
    this.renderEdges(nodes, edges);
    this.renderSelection();
    this.applyPan();
  }

  private applyPan(): void {
    this.surface.style.transform = `translate(${this.panX}px, ${this.panY}px)`;
    this.edgeLayer.style.transform = `translate(${this.panX}px, ${this.panY}px)`;
  }

  private renderSelection(): void {
    for (const el of this.surface.querySelectorAll('.cf-node')) {
      el.classList.toggle('cf-selected', (el as HTMLElement).dataset.nodeId === this.selected);
    }
  }

  private renderNode(node: NodeView): HTMLElement {
    const card = document.createElement('div');
    card.className = `cf-node cf-kind-${node.kind.toLowerCase()}`;
    card.dataset.nodeId = node.nodeId;
    card.style.left = `${node.position[0]}px`;
    card.style.top = `${node.position[1]}px`;

    const header = document.createElement('div');
    header.className = 'cf-node-header';
    const badge = document.createElement('span');
    badge.className = 'cf-badge';
    badge.textContent = KIND_BADGES[node.kind];
    const title = document.createElement('span');
    title.className = 'cf-title';
    title.textContent = this.nodeTitle(node);
    const close = document.createElement('button');
    close.className = 'cf-close';
    close.textContent = '×';
    close.addEventListener('click', (ev) => {
      ev.stopPropagation();
      this.callbacks.onRemoveNode(node.nodeId);
    });
    header.append(badge, title, close);
    card.append(header);

    if (producesDocLists(node.kind)) {
      const outPort = document.createElement('div');
      outPort.className = 'cf-port cf-port-out';
      outPort.title = 'drag to a target to connect';
      outPort.addEventListener('pointerdown', (ev) => {
        ev.stopPropagation();
        this.wire = { fromNode: node.nodeId, port: 'source' };
      });
      card.append(outPort);
    }
    if (node.kind === 'Document' || node.kind === 'Group' || node.kind === 'Note') {
      const ctlPort = document.createElement('div');
      ctlPort.className = 'cf-port cf-port-ctl-out';
      ctlPort.title = 'drag to steer a Rank/Projection';
      ctlPort.addEventListener('pointerdown', (ev) => {
        ev.stopPropagation();
        this.wire = { fromNode: node.nodeId, port: 'control' };
      });
      card.append(ctlPort);
    }
    for (const port of inputPorts(node.kind)) {
      const inPort = document.createElement('div');
      inPort.className = `cf-port cf-port-in cf-port-${port}`;
      inPort.dataset.port = port;
      inPort.addEventListener('pointerup', (ev) => {
        ev.stopPropagation();
        this.finishWire(node, port);
      });
      card.append(inPort);
    }

    card.append(this.renderBody(node));
    card.addEventListener('pointerdown', (ev) => this.startDrag(node, ev));
    card.addEventListener('pointerup', (ev) => {
      if (this.wire) {
        ev.stopPropagation();
        this.finishWire(node, this.wire.port);
      }
    });
    card.addEventListener('click', () => this.select(node.nodeId));
    return card;
  }

  private currentKind(nodeId: string): NodeKind {
    return this.current.get(nodeId)?.kind ?? 'Document';
  }

  private nodeTitle(node: NodeView): string {
    switch (node.kind) {
      case 'Search':
        return String(node.config.query ?? '');
      case 'Group':
        return `${node.config.label ?? ''} (${((node.config.members as string[]) ?? []).length})`;
      case 'Note':
        return String(node.config.text ?? '').slice(0, 40) || '(empty note)';
      case 'Document':
        return String(node.config.doc_id ?? '');
      default:
        return node.nodeId;
    }
  }

  private renderBody(node: NodeView): HTMLElement {
    const body = document.createElement('div');
    body.className = 'cf-node-body';
    if (this.pendingSpinners.has(node.nodeId)) {
      const spin = document.createElement('div');
      spin.className = 'cf-spinner';
      spin.textContent = 'computing…';
      body.append(spin);
      return body;
    }
    const page = this.outputs.get(node.nodeId);
    if (!page) return body;
    if (page.status === 'error' && page.error) {
      const err = document.createElement('div');
      err.className = 'cf-error';
      err.textContent = `${page.error.error}: ${page.error.message}`;
      body.append(err);
      return body;
    }
    if (page.status === 'blocked') {
      const blocked = document.createElement('div');
      blocked.className = 'cf-blocked';
      blocked.textContent = `blocked on ${page.blocked_on ?? 'upstream'}`;
      body.append(blocked);
      return body;
    }
    const stamp = document.createElement('div');
    stamp.className = 'cf-stamp';
    stamp.textContent = page.stamp ? `stamp #${page.stamp.recompute_seq}` : 'no output yet';
    if (this.staleNodes.has(node.nodeId)) {
      stamp.classList.add('cf-stale');
      stamp.textContent += ' (stale)';
    }
    body.append(stamp);
    const list = document.createElement('ul');
    list.className = 'cf-output';
    for (const entry of page.entries) {
      const li = document.createElement('li');
      li.className = entry.noise ? 'cf-doc cf-noise' : 'cf-doc';
      li.textContent =
        entry.score === null || entry.score === undefined
          ? entry.doc_id
          : `${entry.doc_id} · ${entry.score.toFixed(4)}`;
      li.draggable = true;
      li.addEventListener('dragstart', (ev) => {
        ev.dataTransfer?.setData('text/doc-id', entry.doc_id);
      });
      li.addEventListener('click', (ev) => {
        ev.stopPropagation();
        this.callbacks.onOpenDocument(entry.doc_id);
      });
      list.append(li);
    }
    body.append(list);
    if (page.total > page.entries.length + page.offset || page.offset > 0) {
      const pager = document.createElement('div');
      pager.className = 'cf-pager';
      const prev = document.createElement('button');
      prev.textContent = '‹';
      prev.disabled = page.offset === 0;
      prev.addEventListener('click', (ev) => {
        ev.stopPropagation();
        this.callbacks.onPageOutput(node.nodeId, Math.max(0, page.offset - page.limit));
      });
      const info = document.createElement('span');
      info.textContent = `${page.offset + 1}–${page.offset + page.entries.length} of ${page.total}`;
      const next = document.createElement('button');
      next.textContent = '›';
      next.disabled = page.offset + page.entries.length >= page.total;
      next.addEventListener('click', (ev) => {
        ev.stopPropagation();
        this.callbacks.onPageOutput(node.nodeId, page.offset + page.limit);
      });
      pager.append(prev, info, next);
      body.append(pager);
    }
    return body;
  }

  private renderEdges(nodes: Map<string, NodeView>, edges: Map<string, EdgeView>): void {
    this.edgeLayer.replaceChildren();
    for (const edge of edges.values()) {
      const from = nodes.get(edge.from);
      const to = nodes.get(edge.to);
      if (!from || !to) continue;
      const path = document.createElementNS('http://www.w3.org/2000/svg', 'path');
      const x1 = from.position[0] + 180;
      const y1 = from.position[1] + 24;
      const x2 = to.position[0];
      const y2 = to.position[1] + (edge.port === 'control' ? 48 : 24);
      const bend = Math.max(40, (x2 - x1) / 2);
      path.setAttribute('d', `M ${x1} ${y1} C ${x1 + bend} ${y1}, ${x2 - bend} ${y2}, ${x2} ${y2}`);
      path.setAttribute('class', `cf-edge cf-edge-${edge.port}`);
      this.edgeLayer.append(path);
    }
  }

  private startDrag(node: NodeView, ev: PointerEvent): void {
    if (this.wire) return;
    this.drag = {
      nodeId: node.nodeId,
      offsetX: ev.clientX - node.position[0],
      offsetY: ev.clientY - node.position[1],
      moved: false,
    };
    const onMove = (move: PointerEvent) => {
      if (!this.drag) return;
      this.drag.moved = true;
      const card = this.surface.querySelector<HTMLElement>(`[data-node-id="${this.drag.nodeId}"]`);
      if (card) {
        card.style.left = `${move.clientX - this.drag.offsetX}px`;
        card.style.top = `${move.clientY - this.drag.offsetY}px`;
      }
    };
    const onUp = (up: PointerEvent) => {
      window.removeEventListener('pointermove', onMove);
      window.removeEventListener('pointerup', onUp);
      if (this.drag?.moved) {
        this.callbacks.onMoveNode(this.drag.nodeId, up.clientX - this.drag.offsetX, up.clientY - this.drag.offsetY);
      }
      this.drag = null;
    };
    window.addEventListener('pointermove', onMove);
    window.addEventListener('pointerup', onUp);
  }

  private finishWire(target: NodeView, port: Port): void {
    if (!this.wire) return;
    const { fromNode, port: wirePort } = this.wire;
    this.wire = null;
    const effectivePort = wirePort === 'control' ? 'control' : port;
    const fromKind = this.currentKind(fromNode);
    if (!edgeAllowed(fromKind, target.kind, effectivePort)) {
      const portEl = this.surface.querySelector<HTMLElement>(
        `[data-node-id="${target.nodeId}"] .cf-port-${effectivePort}`,
      );
      portEl?.classList.add('cf-port-rejected');
      setTimeout(() => portEl?.classList.remove('cf-port-rejected'), 600);
      this.callbacks.onIllegalConnect(fromNode, target.nodeId, effectivePort);
      return;
    }
    this.callbacks.onConnect(fromNode, target.nodeId, effectivePort);
  }

  private bindPan(): void {
    let panning: { startX: number; startY: number; baseX: number; baseY: number } | null = null;
    this.root.addEventListener('pointerdown', (ev) => {
      if (ev.target !== this.root && ev.target !== this.surface && ev.target !== this.edgeLayer) return;
      panning = { startX: ev.clientX, startY: ev.clientY, baseX: this.panX, baseY: this.panY };
      this.select(null);
      this.renderSelection();
    });
    window.addEventListener('pointermove', (ev) => {
      if (!panning) return;
      this.panX = panning.baseX + (ev.clientX - panning.startX);
      this.panY = panning.baseY + (ev.clientY - panning.startY);
      this.applyPan();
    });
    window.addEventListener('pointerup', () => {
      panning = null;
    });
  }

  private bindDrop(): void {
    this.root.addEventListener('dragover', (ev) => ev.preventDefault());
    this.root.addEventListener('drop', (ev) => {
      ev.preventDefault();
      const docId = ev.dataTransfer?.getData('text/doc-id');
      if (!docId) return;
      const groupCard = (ev.target as HTMLElement).closest<HTMLElement>('.cf-kind-group');
      if (groupCard?.dataset.nodeId) {
        this.callbacks.onDropDocumentOnGroup(docId, groupCard.dataset.nodeId);
        return;
      }
      const rect = this.root.getBoundingClientRect();
      this.callbacks.onDropDocument(docId, ev.clientX - rect.left - this.panX, ev.clientY - rect.top - this.panY);
    });
  }
}
