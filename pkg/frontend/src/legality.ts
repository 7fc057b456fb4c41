/**
 * Client-side mirror of the engine's port legality matrix.
 *
 * Illegal connections are rejected visually before any command is sent; the
 * server remains authoritative (a 409 still rolls back the local echo), so a
 * drift between this table and the engine can delay but never corrupt state.
 */

import type { NodeKind, Port } from './types.js';

const DOC_PRODUCERS: ReadonlySet<NodeKind> = new Set([
  'Document',
  'Search',
  'Group',
  'Rank',
  'Projection',
  'Union',
  'Intersection',
  'Difference',
]);

const SOURCE_TARGETS: ReadonlySet<NodeKind> = new Set([
  'Rank',
  'Projection',
  'Union',
  'Intersection',
  'Difference',
]);

const CONTROL_ACCEPTS: ReadonlyMap<NodeKind, ReadonlySet<NodeKind>> = new Map([
  ['Rank', new Set<NodeKind>(['Document', 'Group', 'Note'])],
  ['Projection', new Set<NodeKind>(['Group'])],
]);

export function edgeAllowed(fromKind: NodeKind, toKind: NodeKind, port: Port): boolean {
  if (port === 'source') {
    return DOC_PRODUCERS.has(fromKind) && SOURCE_TARGETS.has(toKind);
  }
  const accepted = CONTROL_ACCEPTS.get(toKind);
  return accepted !== undefined && accepted.has(fromKind);
}

/** Ports a node offers on its input (right-hand) side, for rendering. */
export function inputPorts(kind: NodeKind): Port[] {
  const ports: Port[] = [];
  if (SOURCE_TARGETS.has(kind)) ports.push('source');
  if (CONTROL_ACCEPTS.has(kind)) ports.push('control');
  return ports;
}

/** Whether the node emits a document-list output (left-hand side). */
export function producesDocLists(kind: NodeKind): boolean {
  return DOC_PRODUCERS.has(kind);
}
