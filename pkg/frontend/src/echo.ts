/**
 * Optimistic local echo with authoritative server reconciliation.
 *
 * Each in-flight command is keyed by its client_tag and carries an overlay
 * (the effect the user should see immediately). When the server acknowledges
 * with a seq and the stream catches up past it, the overlay is discarded —
 * the folded state now covers it. A rejection (409) rolls the overlay back at
 * once. The UI therefore never shows engine-inconsistent state for longer
 * than one reconciliation round trip.
 */

import type { WorkspaceModel, NodeView, EdgeView } from './model.js';
import type { CommandBody, NodeKind, Port } from './types.js';

export type Overlay =
  | { kind: 'move'; nodeId: string; position: [number, number] }
  | { kind: 'addNode'; tempId: string; nodeKind: NodeKind; config: Record<string, unknown>; position: [number, number] }
  | { kind: 'addEdge'; tempId: string; from: string; to: string; port: Port }
  | { kind: 'removeNode'; nodeId: string }
  | { kind: 'removeEdge'; edgeId: string }
  | { kind: 'groupAdd'; nodeId: string; docId: string }
  | { kind: 'groupRemove'; nodeId: string; docId: string };

interface Pending {
  readonly clientTag: string;
  readonly command: CommandBody;
  readonly overlay: Overlay;
  /** Set once the POST response assigns a seq; cleared from pending when the stream reaches it. */
  ackSeq: number | null;
}

let tagCounter = 0;

/** Client tags are unique per session; a retry reuses the tag (idempotent). */
export function freshClientTag(): string {
  tagCounter += 1;
  return `echo-${tagCounter}-${Date.now().toString(36)}`;
}

export class LocalEcho {
  private readonly pending = new Map<string, Pending>();

  get pendingCount(): number {
    return this.pending.size;
  }

  track(clientTag: string, command: CommandBody, overlay: Overlay): void {
    this.pending.set(clientTag, { clientTag, command, overlay, ackSeq: null });
  }

  /** The POST succeeded: remember the seq so the stream can retire the overlay. */
  acknowledge(clientTag: string, seq: number): void {
    const entry = this.pending.get(clientTag);
    if (entry) entry.ackSeq = seq;
  }

  /** The POST was rejected: discard the overlay immediately (rollback). */
  reject(clientTag: string): Overlay | null {
    const entry = this.pending.get(clientTag);
    this.pending.delete(clientTag);
    return entry ? entry.overlay : null;
  }

  /** The stream advanced: retire every overlay whose ack seq is now folded. */
  reconcile(streamSeq: number): void {
    for (const [tag, entry] of [...this.pending]) {
      if (entry.ackSeq !== null && entry.ackSeq <= streamSeq) {
        this.pending.delete(tag);
      }
    }
  }

  /**
   * Project the folded model through the pending overlays. Returns fresh maps;
   * the base model is never mutated by optimistic state.
   */
  view(model: WorkspaceModel): { nodes: Map<string, NodeView>; edges: Map<string, EdgeView> } {
    const nodes = new Map<string, NodeView>();
    for (const [id, node] of model.nodes) {
      nodes.set(id, { ...node, position: [...node.position] as [number, number], config: { ...node.config } });
    }
    const edges = new Map<string, EdgeView>(model.edges);
    for (const entry of this.pending.values()) {
      const o = entry.overlay;
      switch (o.kind) {
        case 'move': {
          const node = nodes.get(o.nodeId);
          if (node) node.position = [o.position[0], o.position[1]];
          break;
        }
        case 'addNode':
          nodes.set(o.tempId, {
            nodeId: o.tempId,
            kind: o.nodeKind,
            config: { ...o.config },
            position: [o.position[0], o.position[1]],
          });
          break;
        case 'addEdge':
          edges.set(o.tempId, { edgeId: o.tempId, from: o.from, to: o.to, port: o.port });
          break;
        case 'removeNode':
          nodes.delete(o.nodeId);
          for (const [edgeId, edge] of [...edges]) {
            if (edge.from === o.nodeId || edge.to === o.nodeId) edges.delete(edgeId);
          }
          break;
        case 'removeEdge':
          edges.delete(o.edgeId);
          break;
        case 'groupAdd': {
          const node = nodes.get(o.nodeId);
          if (node) {
            const members = [...((node.config.members as string[]) ?? [])];
            if (!members.includes(o.docId)) members.push(o.docId);
            node.config = { ...node.config, members };
          }
          break;
        }
        case 'groupRemove': {
          const node = nodes.get(o.nodeId);
          if (node) {
            const members = ((node.config.members as string[]) ?? []).filter((m) => m !== o.docId);
            node.config = { ...node.config, members };
          }
          break;
        }
      }
    }
    return { nodes, edges };
  }
}
