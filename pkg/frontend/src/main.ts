/**
 * Bootstrap: session, snapshot + stream subscription, and the glue between
 * user gestures, optimistic echo, and authoritative server state.
 */

import { ApiClient, EventStream, RequestFailed } from './api.js';
import { CanvasView } from './canvas.js';
import { LocalEcho, freshClientTag } from './echo.js';
import { WorkspaceModel } from './model.js';
import { Sidebar } from './sidebar.js';
import type { ActionEvent, CommandBody, StreamMessage } from './types.js';

interface AppConfig {
  baseUrl: string;
  workspaceId: string;
  actorId: string;
}

export class App {
  private model = new WorkspaceModel();
  private readonly echo = new LocalEcho();
  private stream: EventStream | null = null;
  private canvas!: CanvasView;
  private sidebar!: Sidebar;
  private searchNodeId: string | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly config: AppConfig,
  ) {}

  async start(root: HTMLElement): Promise<void> {
    await this.api.createSession(this.config.actorId);

    const sidebarEl = document.createElement('aside');
    const canvasEl = document.createElement('main');
    const toolbar = this.buildToolbar();
    root.append(toolbar, sidebarEl, canvasEl);

    this.sidebar = new Sidebar(sidebarEl, {
      onSearch: (query) => void this.runSearch(query),
      onOpenDocument: (docId) => void this.openDocument(docId),
      onAddSearchNode: (query) => void this.send({ command: 'AddNode', node_kind: 'Search', config: { query } }, null),
    });
    this.canvas = new CanvasView(canvasEl, {
      onMoveNode: (nodeId, x, y) =>
        void this.send({ command: 'MoveNode', node_id: nodeId, x, y }, { kind: 'move', nodeId, position: [x, y] }),
      onConnect: (fromNode, toNode, port) =>
        void this.send(
          { command: 'AddEdge', from_node: fromNode, to_node: toNode, port },
          { kind: 'addEdge', tempId: `tmp-${fromNode}-${toNode}-${port}`, from: fromNode, to: toNode, port },
        ),
      onIllegalConnect: (fromNode, toNode, port) =>
        this.toast(`a ${this.kindOf(fromNode)} cannot feed the ${port} port of a ${this.kindOf(toNode)}`),
      onRemoveNode: (nodeId) =>
        void this.send({ command: 'RemoveNode', node_id: nodeId }, { kind: 'removeNode', nodeId }),
      onOpenDocument: (docId) => void this.openDocument(docId),
      onDropDocument: (docId, x, y) =>
        void this.send(
          { command: 'AddNode', node_kind: 'Document', config: { doc_id: docId }, position: [x, y] },
          { kind: 'addNode', tempId: `tmp-doc-${docId}`, nodeKind: 'Document', config: { doc_id: docId }, position: [x, y] },
        ),
      onDropDocumentOnGroup: (docId, groupId) =>
        void this.send(
          { command: 'GroupAdd', node_id: groupId, doc_id: docId },
          { kind: 'groupAdd', nodeId: groupId, docId },
        ),
      onSelectNode: (nodeId) => void this.refreshOutput(nodeId),
      onPageOutput: (nodeId, offset) => void this.refreshOutput(nodeId, offset),
    });
    this.bindKeyboard();

    const { snapshot, seq } = await this.api.snapshot(this.config.workspaceId);
    this.model = WorkspaceModel.fromSnapshot(snapshot, seq);
    this.stream = new EventStream(
      this.api,
      this.config.workspaceId,
      seq + 1,
      (message) => this.onStream(message),
      (url) => new WebSocket(url) as unknown as import('./api.js').StreamSocket,
    );
    this.redraw();
  }

  private kindOf(nodeId: string): string {
    return this.model.nodes.get(nodeId)?.kind ?? 'node';
  }

  private buildToolbar(): HTMLElement {
    const bar = document.createElement('nav');
    bar.className = 'cf-toolbar';
    const mk = (label: string, command: CommandBody) => {
      const btn = document.createElement('button');
      btn.textContent = label;
      btn.addEventListener('click', () => void this.send(command, null));
      return btn;
    };
    bar.append(
      mk('+ group', { command: 'AddNode', node_kind: 'Group', config: { label: 'new group', members: [] } }),
      mk('+ note', { command: 'AddNode', node_kind: 'Note', config: { text: '' } }),
      mk('+ rank', { command: 'AddNode', node_kind: 'Rank', config: {} }),
      mk('+ projection', { command: 'AddNode', node_kind: 'Projection', config: {} }),
      mk('undo', { command: 'Undo' }),
      mk('redo', { command: 'Redo' }),
    );
    return bar;
  }

  private bindKeyboard(): void {
    window.addEventListener('keydown', (ev) => {
      if ((ev.target as HTMLElement)?.tagName === 'INPUT') return;
      if (ev.key === 'z' && (ev.ctrlKey || ev.metaKey) && !ev.shiftKey) {
        void this.send({ command: 'Undo' }, null);
      } else if ((ev.key === 'z' && ev.shiftKey && (ev.ctrlKey || ev.metaKey)) || (ev.key === 'y' && ev.ctrlKey)) {
        void this.send({ command: 'Redo' }, null);
      } else if (ev.key === 'Tab') {
        ev.preventDefault();
        this.canvas.cycleSelection(ev.shiftKey ? -1 : 1);
      } else if (ev.key === 'a') {
        // quick grouping: add the sidebar's selected document to the selected group
        const docId = this.sidebar.selectedDocId;
        const target = this.canvas.selectedNode;
        if (docId && target && this.model.nodes.get(target)?.kind === 'Group') {
          void this.send({ command: 'GroupAdd', node_id: target, doc_id: docId }, { kind: 'groupAdd', nodeId: target, docId });
        }
      } else {
        this.sidebar.handleKey(ev.key);
      }
    });
  }

  private onStream(message: StreamMessage): void {
    if (message.seq === null || message.seq === undefined) {
      const status = message as Extract<StreamMessage, { kind: 'ProjectionStatus' }>;
      if (status.state === 'started') this.canvas.setPending(status.node_id);
      if (status.state === 'completed' || status.state === 'failed') void this.refreshOutput(status.node_id);
      this.redraw();
      return;
    }
    const event = message as ActionEvent;
    this.model.apply(event);
    this.echo.reconcile(event.seq);
    this.redraw();
    const touched = event.payload?.node_id ?? event.payload?.to;
    if (touched && this.canvas.selectedNode === touched) void this.refreshOutput(touched);
  }

  stop(): void {
    this.stream?.close();
    this.stream = null;
  }

  private async send(command: CommandBody, overlay: import('./echo.js').Overlay | null): Promise<void> {
    const clientTag = freshClientTag();
    command.client_tag = clientTag;
    command.based_on_seq = this.model.lastSeq;
    if (overlay) {
      this.echo.track(clientTag, command, overlay);
      this.redraw();
    }
    try {
      const result = await this.api.command(this.config.workspaceId, command);
      if (overlay) this.echo.acknowledge(clientTag, result.seq);
    } catch (err) {
      if (overlay) {
        this.echo.reject(clientTag);
        this.redraw();
      }
      if (err instanceof RequestFailed) this.toast(`${err.detail.error}: ${err.detail.message}`);
      else throw err;
    }
  }

  private redraw(): void {
    const { nodes, edges } = this.echo.view(this.model);
    const stale = [...nodes.keys()].filter((id) => this.model.isStale(id, this.renderedStamp(id)));
    this.canvas.setStale(stale);
    this.canvas.render(nodes, edges);
  }

  private readonly renderedStamps = new Map<string, number>();

  private renderedStamp(nodeId: string): number {
    return this.renderedStamps.get(nodeId) ?? Number.MAX_SAFE_INTEGER;
  }

  private async refreshOutput(nodeId: string | null, offset = 0): Promise<void> {
    if (!nodeId || !this.model.nodes.has(nodeId)) return;
    const page = await this.api.output(this.config.workspaceId, nodeId, offset);
    this.canvas.setOutput(nodeId, page);
    if (page.stamp) this.renderedStamps.set(nodeId, page.stamp.recompute_seq);
    if (page.status === 'pending') this.canvas.setPending(nodeId);
    this.redraw();
  }

  private async runSearch(query: string): Promise<void> {
    // the sidebar search is a real Search node so results carry provenance
    try {
      if (this.searchNodeId === null || !this.model.nodes.has(this.searchNodeId)) {
        const result = await this.api.command(this.config.workspaceId, {
          command: 'AddNode',
          node_kind: 'Search',
          config: { query },
          position: [20, 20],
          client_tag: freshClientTag(),
        });
        this.searchNodeId = result.node_id ?? null;
      } else {
        await this.api.command(this.config.workspaceId, {
          command: 'ChangeNodeConfig',
          node_id: this.searchNodeId,
          config: { query },
          client_tag: freshClientTag(),
        });
      }
      if (this.searchNodeId) {
        const page = await this.api.output(this.config.workspaceId, this.searchNodeId, 0, 50);
        this.sidebar.setStatus(`${page.total} documents`);
        this.sidebar.showResults(page.entries);
      }
    } catch (err) {
      if (err instanceof RequestFailed) this.sidebar.setStatus(err.detail.message);
      else throw err;
    }
  }

  private async openDocument(docId: string): Promise<void> {
    this.sidebar.showDocument(await this.api.document(docId));
  }

  private toast(message: string): void {
    const el = document.createElement('div');
    el.className = 'cf-toast';
    el.textContent = message;
    document.body.append(el);
    setTimeout(() => el.remove(), 2500);
  }
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const config: AppConfig = {
    baseUrl: params.get('api') ?? window.location.origin,
    workspaceId: params.get('workspace') ?? 'w1',
    actorId: params.get('actor') ?? `anon-${Math.random().toString(36).slice(2, 8)}`,
  };
  const app = new App(new ApiClient(config.baseUrl), config);
  await app.start(document.getElementById('app') ?? document.body);
}

if (typeof window !== 'undefined' && typeof document !== 'undefined' && document.getElementById('app')) {
  void boot();
}
