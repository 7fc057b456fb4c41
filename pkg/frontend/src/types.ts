/** Shared wire types for the /v1 API (mirrors the server's JSON encodings). */

export type NodeKind =
  | 'Document'
  | 'Search'
  | 'Group'
  | 'Note'
  | 'Rank'
  | 'Projection'
  | 'Union'
  | 'Intersection'
  | 'Difference';

export type Port = 'source' | 'control';

export interface SnapshotNode {
  readonly node_id: string;
  readonly kind: NodeKind;
  readonly config: Record<string, unknown>;
  readonly position: [number, number];
}

export interface SnapshotEdge {
  readonly from: string;
  readonly to: string;
  readonly port: Port;
}

export interface WorkspaceSnapshot {
  readonly workspace_id: string;
  readonly seed: number;
  readonly nodes: SnapshotNode[];
  readonly edges: SnapshotEdge[];
}

/** One event as it appears in the log file and on the stream. */
export interface ActionEvent {
  readonly seq: number;
  readonly actor: string;
  readonly ts: number;
  readonly kind: string;
  readonly payload: Record<string, any>;
}

/** Unlogged stream notice for long-running projection jobs. */
export interface ProjectionStatus {
  readonly kind: 'ProjectionStatus';
  readonly seq: null;
  readonly node_id: string;
  readonly state: 'started' | 'completed' | 'failed' | 'blocked' | 'superseded';
  readonly stamp?: OutputStamp;
}

export type StreamMessage = ActionEvent | ProjectionStatus;

export interface OutputStamp {
  readonly node_id: string;
  readonly recompute_seq: number;
}

export interface OutputEntry {
  readonly list_index: number;
  readonly doc_id: string;
  readonly score: number | null;
  readonly noise: boolean;
}

export interface OutputPage {
  readonly node_id: string;
  readonly status: 'ok' | 'error' | 'blocked' | 'pending';
  readonly stamp: OutputStamp | null;
  readonly total: number;
  readonly offset: number;
  readonly limit: number;
  readonly entries: OutputEntry[];
  readonly error: { error: string; message: string } | null;
  readonly blocked_on: string | null;
  readonly warnings: string[];
}

export interface DocumentRecord {
  readonly doc_id: string;
  readonly title: string;
  readonly body: string;
  readonly metadata: Record<string, string>;
  readonly ingest_seq: number;
}

export interface CommandBody {
  command: string;
  client_tag?: string;
  based_on_seq?: number;
  node_kind?: NodeKind;
  config?: Record<string, unknown>;
  position?: [number, number];
  node_id?: string;
  from_node?: string;
  to_node?: string;
  port?: Port;
  edge_id?: string;
  doc_id?: string;
  x?: number;
  y?: number;
  seed?: number;
}

export interface CommandResult {
  readonly seq: number;
  readonly command: string;
  readonly node_id?: string | null;
  readonly edge_id?: string | null;
  readonly members?: string[] | null;
}

export interface ApiError {
  readonly status: number;
  readonly error: string;
  readonly message: string;
}
