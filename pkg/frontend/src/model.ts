/**
 * Client-side workspace state: a pure fold of the event stream.
 *
 * The model mirrors the server's fold rules exactly, so a client that applies
 * the same events in seq order converges on the same graph the server holds.
 * It also tracks which nodes became stale relative to a rendered output stamp
 * (any structural event dirties the node and everything downstream, exactly
 * like the engine's dirty marking; moves never do).
 */

import type {
  ActionEvent,
  NodeKind,
  Port,
  SnapshotEdge,
  SnapshotNode,
  WorkspaceSnapshot,
} from './types.js';

export interface NodeView {
  readonly nodeId: string;
  kind: NodeKind;
  config: Record<string, any>;
  position: [number, number];
}

export interface EdgeView {
  readonly edgeId: string;
  readonly from: string;
  readonly to: string;
  readonly port: Port;
}

export class WorkspaceModel {
  workspaceId = '';
  seed = 0;
  lastSeq = 0;
  readonly nodes = new Map<string, NodeView>();
  readonly edges = new Map<string, EdgeView>();
  /** Highest event seq that may have changed each node's output. */
  readonly dirtiedAt = new Map<string, number>();

  /** Initialize from a snapshot taken at `seq` (stream resumes from there). */
  static fromSnapshot(snapshot: WorkspaceSnapshot, seq: number): WorkspaceModel {
    const model = new WorkspaceModel();
    model.workspaceId = snapshot.workspace_id;
    model.seed = snapshot.seed;
    model.lastSeq = seq;
    for (const n of snapshot.nodes) {
      model.nodes.set(n.node_id, {
        nodeId: n.node_id,
        kind: n.kind,
        config: { ...n.config },
        position: [n.position[0], n.position[1]],
      });
    }
    let edgeCounter = 0;
    for (const e of snapshot.edges) {
      const edgeId = `snap-e${++edgeCounter}`;
      model.edges.set(edgeId, { edgeId, from: e.from, to: e.to, port: e.port });
    }
    return model;
  }

  descendants(nodeId: string): Set<string> {
    const out = new Set<string>();
    const stack = [nodeId];
    while (stack.length > 0) {
      const current = stack.pop()!;
      for (const edge of this.edges.values()) {
        if (edge.from === current && !out.has(edge.to)) {
          out.add(edge.to);
          stack.push(edge.to);
        }
      }
    }
    return out;
  }

  private markDirty(nodeId: string, seq: number): void {
    if (!this.nodes.has(nodeId)) return;
    this.dirtiedAt.set(nodeId, seq);
    for (const d of this.descendants(nodeId)) {
      this.dirtiedAt.set(d, seq);
    }
  }

  /** Apply one event; out-of-order or duplicate seqs are rejected by the caller. */
  apply(event: ActionEvent): void {
    const p = event.payload;
    switch (event.kind) {
      case 'WorkspaceCreated':
        this.workspaceId = p.workspace_id;
        this.seed = p.seed ?? 0;
        break;
      case 'SeedSet':
        this.seed = p.seed;
        for (const node of this.nodes.values()) {
          if (node.kind === 'Projection') this.markDirty(node.nodeId, event.seq);
        }
        break;
      case 'NodeAdded':
        this.nodes.set(p.node_id, {
          nodeId: p.node_id,
          kind: p.kind,
          config: { ...p.config },
          position: [p.position?.[0] ?? 0, p.position?.[1] ?? 0],
        });
        this.markDirty(p.node_id, event.seq);
        break;
      case 'NodeRemoved': {
        const downstream = this.descendants(p.node_id);
        for (const [edgeId, edge] of [...this.edges]) {
          if (edge.from === p.node_id || edge.to === p.node_id) this.edges.delete(edgeId);
        }
        this.nodes.delete(p.node_id);
        this.dirtiedAt.delete(p.node_id);
        for (const d of downstream) this.markDirty(d, event.seq);
        break;
      }
      case 'NodeConfigChanged': {
        const node = this.nodes.get(p.node_id);
        if (node) {
          node.config = { ...p.config };
          this.markDirty(p.node_id, event.seq);
        }
        break;
      }
      case 'NodeMoved': {
        const node = this.nodes.get(p.node_id);
        if (node) node.position = [p.position[0], p.position[1]];
        break; // layout only: never dirties outputs
      }
      case 'EdgeAdded':
        this.edges.set(p.edge_id, {
          edgeId: p.edge_id,
          from: p.from,
          to: p.to,
          port: p.port,
        });
        this.markDirty(p.to, event.seq);
        break;
      case 'EdgeRemoved': {
        const edge = this.edges.get(p.edge_id);
        this.edges.delete(p.edge_id);
        if (edge) this.markDirty(edge.to, event.seq);
        break;
      }
      case 'GroupMemberAdded': {
        const node = this.nodes.get(p.node_id);
        if (node) {
          const members: string[] = [...(node.config.members ?? [])];
          if (p.index === null || p.index === undefined) members.push(p.doc_id);
          else members.splice(p.index, 0, p.doc_id);
          node.config = { ...node.config, members };
          this.markDirty(p.node_id, event.seq);
        }
        break;
      }
      case 'GroupMemberRemoved': {
        const node = this.nodes.get(p.node_id);
        if (node) {
          const members: string[] = [...(node.config.members ?? [])];
          const at = members.indexOf(p.doc_id);
          if (at >= 0) members.splice(at, 1);
          node.config = { ...node.config, members };
          this.markDirty(p.node_id, event.seq);
        }
        break;
      }
      default:
        break; // future event kinds are ignored, not fatal
    }
    if (event.seq > this.lastSeq) this.lastSeq = event.seq;
  }

  /** A rendered output page is stale once a later structural event touched the node. */
  isStale(nodeId: string, renderedStampSeq: number): boolean {
    const dirtied = this.dirtiedAt.get(nodeId);
    return dirtied !== undefined && dirtied > renderedStampSeq;
  }

  /** Canonical structural form matching the server snapshot (for convergence checks). */
  toSnapshot(): WorkspaceSnapshot {
    const numericSuffix = (id: string): [number, string] => {
      const match = /(\d+)$/.exec(id);
      return [match ? parseInt(match[1], 10) : -1, id];
    };
    const nodes: SnapshotNode[] = [...this.nodes.values()]
      .sort((a, b) => {
        const [na, sa] = numericSuffix(a.nodeId);
        const [nb, sb] = numericSuffix(b.nodeId);
        return na !== nb ? na - nb : sa < sb ? -1 : sa > sb ? 1 : 0;
      })
      .map((n) => ({
        node_id: n.nodeId,
        kind: n.kind,
        config: n.config,
        position: [n.position[0], n.position[1]],
      }));
    const edges: SnapshotEdge[] = [...this.edges.values()]
      .map((e) => ({ from: e.from, to: e.to, port: e.port }))
      .sort((a, b) =>
        a.from !== b.from
          ? a.from < b.from ? -1 : 1
          : a.to !== b.to
            ? a.to < b.to ? -1 : 1
            : a.port < b.port ? -1 : a.port > b.port ? 1 : 0,
      );
    return { workspace_id: this.workspaceId, seed: this.seed, nodes, edges };
  }
}
