/**
 * Sidebar: search box, draggable document pills, and the quick viewer that
 * lets users skim a document without expanding anything on the canvas.
 */

import type { DocumentRecord, OutputEntry } from './types.js';

export interface SidebarCallbacks {
  onSearch(query: string): void;
  onOpenDocument(docId: string): void;
  onAddSearchNode(query: string): void;
}

export class Sidebar {
  private readonly results: HTMLElement;
  private readonly viewer: HTMLElement;
  private readonly status: HTMLElement;
  private pills: string[] = [];
  private selectedPill = -1;

  constructor(
    root: HTMLElement,
    private readonly callbacks: SidebarCallbacks,
  ) {
    root.classList.add('cf-sidebar');
    const form = document.createElement('form');
    const input = document.createElement('input');
    input.type = 'search';
    input.placeholder = 'keyword search — wifi AND password, "end of life", snoop*';
    const addButton = document.createElement('button');
    addButton.type = 'button';
    addButton.textContent = 'add to canvas';
    addButton.addEventListener('click', () => {
      if (input.value.trim()) this.callbacks.onAddSearchNode(input.value.trim());
    });
    form.append(input, addButton);
    form.addEventListener('submit', (ev) => {
      ev.preventDefault();
      if (input.value.trim()) this.callbacks.onSearch(input.value.trim());
    });
    this.status = document.createElement('div');
    this.status.className = 'cf-status';
    this.results = document.createElement('ul');
    this.results.className = 'cf-results';
    this.viewer = document.createElement('div');
    this.viewer.className = 'cf-viewer';
    root.append(form, this.status, this.results, this.viewer);
  }

  setStatus(text: string): void {
    this.status.textContent = text;
  }

  showResults(entries: OutputEntry[]): void {
    this.pills = entries.map((e) => e.doc_id);
    this.selectedPill = this.pills.length > 0 ? 0 : -1;
    this.results.replaceChildren();
    for (const entry of entries) {
      const li = document.createElement('li');
      li.className = 'cf-pill';
      li.draggable = true;
      li.textContent = entry.doc_id;
      li.dataset.docId = entry.doc_id;
      li.addEventListener('dragstart', (ev) => {
        ev.dataTransfer?.setData('text/doc-id', entry.doc_id);
      });
      li.addEventListener('click', () => this.callbacks.onOpenDocument(entry.doc_id));
      this.results.append(li);
    }
    this.highlight();
  }

  /** Keyboard navigation: j/k (or arrows) skim pills, Enter opens the viewer. */
  handleKey(key: string): string | null {
    if (this.pills.length === 0) return null;
    if (key === 'ArrowDown' || key === 'j') {
      this.selectedPill = Math.min(this.selectedPill + 1, this.pills.length - 1);
      this.highlight();
      return null;
    }
    if (key === 'ArrowUp' || key === 'k') {
      this.selectedPill = Math.max(this.selectedPill - 1, 0);
      this.highlight();
      return null;
    }
    if (key === 'Enter' && this.selectedPill >= 0) {
      const docId = this.pills[this.selectedPill];
      this.callbacks.onOpenDocument(docId);
      return docId;
    }
    return null;
  }

  get selectedDocId(): string | null {
    return this.selectedPill >= 0 ? this.pills[this.selectedPill] : null;
  }

  private highlight(): void {
    [...this.results.children].forEach((el, i) => {
      el.classList.toggle('cf-pill-selected', i === this.selectedPill);
    });
  }

  showDocument(doc: DocumentRecord): void {
    this.viewer.replaceChildren();
    const title = document.createElement('h3');
    title.textContent = doc.title || doc.doc_id;
    const body = document.createElement('p');
    body.textContent = doc.body;
    const meta = document.createElement('dl');
    for (const [key, value] of Object.entries(doc.metadata)) {
      const dt = document.createElement('dt');
      dt.textContent = key;
      const dd = document.createElement('dd');
      dd.textContent = value;
      meta.append(dt, dd);
    }
    this.viewer.append(title, body, meta);
  }
}
