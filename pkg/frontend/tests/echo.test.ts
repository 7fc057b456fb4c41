import { describe, expect, it } from 'vitest';

import { LocalEcho, freshClientTag } from '../src/echo.js';
import { WorkspaceModel } from '../src/model.js';
import type { ActionEvent } from '../src/types.js';

let seq = 0;
function ev(kind: string, payload: Record<string, unknown>): ActionEvent {
  seq += 1;
  return { seq, actor: 'me', ts: seq, kind, payload };
}

function baseModel(): WorkspaceModel {
  seq = 0;
  const model = new WorkspaceModel();
  model.apply(ev('WorkspaceCreated', { workspace_id: 'w', corpus_id: 'c', seed: 0 }));
  model.apply(ev('NodeAdded', { node_id: 'n1', kind: 'Group', config: { label: 'g', members: ['d1'] }, position: [0, 0] }));
  return model;
}

describe('LocalEcho', () => {
  it('applies an optimistic move instantly and retires it after the stream catches up', () => {
    const model = baseModel();
    const echo = new LocalEcho();
    const tag = freshClientTag();
    echo.track(tag, { command: 'MoveNode', node_id: 'n1', x: 50, y: 60 }, { kind: 'move', nodeId: 'n1', position: [50, 60] });

    expect(echo.view(model).nodes.get('n1')?.position).toEqual([50, 60]); // optimistic
    expect(model.nodes.get('n1')?.position).toEqual([0, 0]); // base untouched

    echo.acknowledge(tag, 3);
    model.apply(ev('NodeMoved', { node_id: 'n1', position: [50, 60], prev_position: [0, 0] })); // seq 3 arrives
    echo.reconcile(model.lastSeq);
    expect(echo.pendingCount).toBe(0);
    expect(echo.view(model).nodes.get('n1')?.position).toEqual([50, 60]); // folded state covers it
  });

  it('rolls back immediately on rejection', () => {
    const model = baseModel();
    const echo = new LocalEcho();
    const tag = freshClientTag();
    echo.track(tag, { command: 'AddEdge', from_node: 'n1', to_node: 'n1', port: 'source' },
      { kind: 'addEdge', tempId: 'tmp-1', from: 'n1', to: 'n1', port: 'source' });
    expect(echo.view(model).edges.has('tmp-1')).toBe(true);
    echo.reject(tag); // server said WouldCycle
    expect(echo.view(model).edges.has('tmp-1')).toBe(false);
    expect(echo.pendingCount).toBe(0);
  });

  it('does not retire an overlay before its ack seq is folded', () => {
    const model = baseModel();
    const echo = new LocalEcho();
    const tag = freshClientTag();
    echo.track(tag, { command: 'GroupAdd', node_id: 'n1', doc_id: 'd2' }, { kind: 'groupAdd', nodeId: 'n1', docId: 'd2' });
    echo.acknowledge(tag, 99); // server committed far ahead of what we folded
    echo.reconcile(model.lastSeq); // lastSeq = 2 < 99
    expect(echo.pendingCount).toBe(1);
    expect(echo.view(model).nodes.get('n1')?.config.members).toEqual(['d1', 'd2']);
  });

  it('overlays temp nodes and group membership without duplicating folded state', () => {
    const model = baseModel();
    const echo = new LocalEcho();
    const tag = freshClientTag();
    echo.track(tag, { command: 'AddNode', node_kind: 'Document', config: { doc_id: 'd9' } },
      { kind: 'addNode', tempId: 'tmp-doc-d9', nodeKind: 'Document', config: { doc_id: 'd9' }, position: [10, 10] });
    const view = echo.view(model);
    expect(view.nodes.get('tmp-doc-d9')?.kind).toBe('Document');

    // server assigns the real id n2 at seq 3; overlay retires, real node remains
    echo.acknowledge(tag, 3);
    model.apply(ev('NodeAdded', { node_id: 'n2', kind: 'Document', config: { doc_id: 'd9' }, position: [10, 10] }));
    echo.reconcile(model.lastSeq);
    const settled = echo.view(model);
    expect(settled.nodes.has('tmp-doc-d9')).toBe(false);
    expect(settled.nodes.get('n2')?.config.doc_id).toBe('d9');
  });

  it('removeNode overlay hides incident edges too', () => {
    const model = baseModel();
    model.apply(ev('NodeAdded', { node_id: 'n2', kind: 'Rank', config: {}, position: [0, 0] }));
    model.apply(ev('EdgeAdded', { edge_id: 'e1', from: 'n1', to: 'n2', port: 'control' }));
    const echo = new LocalEcho();
    echo.track('t', { command: 'RemoveNode', node_id: 'n1' }, { kind: 'removeNode', nodeId: 'n1' });
    const view = echo.view(model);
    expect(view.nodes.has('n1')).toBe(false);
    expect(view.edges.size).toBe(0);
    expect(model.edges.size).toBe(1); // base state intact until the event arrives
  });

  it('client tags are unique', () => {
    const tags = new Set(Array.from({ length: 200 }, () => freshClientTag()));
    expect(tags.size).toBe(200);
  });
});
