import { swatchColor } from './colors.js';
import type {
  FeedbackTemplate,
  Garment,
  GarmentsPage,
  Health,
  RankedGarment,
  SessionTurn,
  TemplateInventory,
} from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function chips(attributes: Record<string, string>): string {
  return Object.entries(attributes)
    .sort(([a], [b]) => (a < b ? -1 : 1))
    .map(([type, value]) => `<span class="chip" title="${escapeHtml(type)}">${escapeHtml(value)}</span>`)
    .join('');
}

export interface CardOptions {
  action: 'select-reference' | 'promote' | 'none';
  selected?: boolean;
  rank?: number;
  score?: number;
}

export function garmentCard(
  garment: Pick<Garment, 'id' | 'category' | 'attributes'>,
  options: CardOptions,
): string {
  const { action, selected = false, rank, score } = options;
  const rankTag = rank === undefined ? '' : `<span class="rank">#${rank}</span>`;
  const scoreTag = score === undefined ? '' : `<span class="score">${score.toFixed(4)}</span>`;
  const button =
    action === 'promote'
      ? `<button data-action="promote" data-id="${escapeHtml(garment.id)}">use as reference</button>`
      : '';
  return `
    <div class="card${selected ? ' selected' : ''}" data-garment="${escapeHtml(garment.id)}"
         ${action === 'select-reference' ? `data-action="select-reference" data-id="${escapeHtml(garment.id)}"` : ''}>
      <div class="swatch" style="background:${swatchColor(garment.attributes, garment.id)}"></div>
      <div class="card-head">
        ${rankTag}
        <span class="gid">${escapeHtml(garment.id)}</span>
        <span class="badge category">${escapeHtml(garment.category)}</span>
        ${scoreTag}
      </div>
      <div class="chips">${chips(garment.attributes)}</div>
      ${button}
    </div>`;
}

export function healthBar(health: Health): string {
  return `<span>serving <b>${escapeHtml(health.split)}</b> split</span>
    <span>${health.gallery_size} in gallery / ${health.garments} garments</span>
    <span>d_model ${health.d_model}</span>`;
}

export interface GalleryFilters {
  split: string;
  category: string;
}

export function galleryView(
  page: GarmentsPage,
  filters: GalleryFilters,
  splits: string[],
  categories: string[],
  referenceId: string | null,
): string {
  const pages = Math.max(1, Math.ceil(page.total / page.page_size));
  const options = (values: string[], current: string) =>
    ['<option value="">all</option>']
      .concat(
        values.map(
          (v) =>
            `<option value="${escapeHtml(v)}"${v === current ? ' selected' : ''}>${escapeHtml(v)}</option>`,
        ),
      )
      .join('');
  const cards = page.items
    .map((g) => garmentCard(g, { action: 'select-reference', selected: g.id === referenceId }))
    .join('');
  return `
    <div class="filters">
      <label>split <select data-filter="split">${options(splits, filters.split)}</select></label>
      <label>category <select data-filter="category">${options(categories, filters.category)}</select></label>
    </div>
    <div class="grid">${cards || '<p class="empty">no garments match</p>'}</div>
    <div class="pager">
      <button data-action="page-prev" ${page.page <= 1 ? 'disabled' : ''}>prev</button>
      <span>page ${page.page} of ${pages} (${page.total} items)</span>
      <button data-action="page-next" ${page.page >= pages ? 'disabled' : ''}>next</button>
    </div>`;
}

export function referencePanel(garment: Garment | null): string {
  if (garment === null) {
    return '<p class="empty">pick a reference from the gallery</p>';
  }
  return garmentCard(garment, { action: 'none' });
}

/** Slot names map to dropdown kinds: A/A2/TA attribute types, V/V1/V2/TV values, TC/RC categories. */
export function slotKind(slot: string): 'type' | 'value' | 'category' {
  if (slot === 'TC' || slot === 'RC') return 'category';
  if (slot.startsWith('V') || slot === 'TV') return 'value';
  return 'type';
}

export function slotControls(
  template: FeedbackTemplate,
  inventory: TemplateInventory,
  chosen: Record<string, string>,
): string {
  return template.slots
    .map((slot) => {
      const kind = slotKind(slot);
      let body: string;
      if (kind === 'category') {
        body = inventory.categories
          .map(
            (c) =>
              `<option value="${escapeHtml(c)}"${chosen[slot] === c ? ' selected' : ''}>${escapeHtml(c)}</option>`,
          )
          .join('');
      } else if (kind === 'type') {
        body = Object.keys(inventory.attribute_types)
          .map(
            (t) =>
              `<option value="${escapeHtml(t)}"${chosen[slot] === t ? ' selected' : ''}>${escapeHtml(t)}</option>`,
          )
          .join('');
      } else {
        body = Object.entries(inventory.attribute_types)
          .map(
            ([type, values]) =>
              `<optgroup label="${escapeHtml(type)}">` +
              values
                .map(
                  (v) =>
                    `<option value="${escapeHtml(v)}"${chosen[slot] === v ? ' selected' : ''}>${escapeHtml(v)}</option>`,
                )
                .join('') +
              '</optgroup>',
          )
          .join('');
      }
      return `<label class="slot">${escapeHtml(slot)}
        <select data-slot="${escapeHtml(slot)}">
          <option value="">--</option>${body}
        </select></label>`;
    })
    .join('');
}

export function fillTemplate(text: string, chosen: Record<string, string>): string {
  return text.replace(/\{([A-Z0-9]+)\}/g, (match, slot: string) => chosen[slot] ?? match);
}

export interface ComposerState {
  templateIndex: number | null;
  chosen: Record<string, string>;
  k: number;
  branchOverride: '' | 'tgr' | 'vcr';
}

export function composerView(
  inventory: TemplateInventory | null,
  state: ComposerState,
  maxK: number,
  busy: boolean,
): string {
  let builder = '<p class="empty">templates unavailable</p>';
  if (inventory !== null) {
    const picker = inventory.templates
      .map(
        (t, i) =>
          `<option value="${i}"${state.templateIndex === i ? ' selected' : ''}>[${t.task}] ${escapeHtml(t.text)}</option>`,
      )
      .join('');
    const template = state.templateIndex === null ? null : inventory.templates[state.templateIndex];
    const slots =
      template === undefined || template === null
        ? ''
        : slotControls(template, inventory, state.chosen);
    const preview =
      template === undefined || template === null
        ? ''
        : `<span class="preview">${escapeHtml(fillTemplate(template.text, state.chosen))}</span>
           <button data-action="insert-template">insert</button>`;
    builder = `
      <label>template <select data-action="pick-template">
        <option value="">free text</option>${picker}
      </select></label>
      <div class="slots">${slots}</div>
      <div class="preview-row">${preview}</div>`;
  }
  return `
    ${builder}
    <textarea data-role="feedback" rows="2" placeholder="describe the change or the match you want"></textarea>
    <div class="send-row">
      <label>k <input data-role="k" type="number" min="1" max="${maxK}" value="${state.k}"></label>
      <label>branch <select data-role="branch-override">
        <option value=""${state.branchOverride === '' ? ' selected' : ''}>auto</option>
        <option value="tgr"${state.branchOverride === 'tgr' ? ' selected' : ''}>tgr</option>
        <option value="vcr"${state.branchOverride === 'vcr' ? ' selected' : ''}>vcr</option>
      </select></label>
      <button data-action="send" ${busy ? 'disabled' : ''}>${busy ? 'searching…' : 'search'}</button>
    </div>`;
}

export function resultsView(turn: SessionTurn | null): string {
  if (turn === null) {
    return '<p class="empty">no results yet</p>';
  }
  const [vcrLogit, tgrLogit] = turn.branch_logits;
  const cards = turn.results
    .map((r: RankedGarment, i: number) =>
      garmentCard(r, { action: 'promote', rank: i + 1, score: r.score }),
    )
    .join('');
  return `
    <div class="turn-head">
      <span class="badge branch ${turn.branch}">${turn.branch.toUpperCase()}</span>
      <span class="feedback-echo">"${escapeHtml(turn.feedback)}"</span>
      <span class="logits">vcr ${vcrLogit.toFixed(3)} / tgr ${tgrLogit.toFixed(3)}</span>
    </div>
    <div class="grid results-grid">${cards}</div>`;
}

export function timelineView(turns: SessionTurn[], currentTurn: number | null): string {
  if (turns.length === 0) {
    return '<p class="empty">no turns yet</p>';
  }
  const crumbs = turns
    .map(
      (t, i) => `
      <button class="crumb${t.turn === currentTurn ? ' current' : ''}" data-action="restore" data-index="${i}">
        <span class="badge branch ${t.branch}">${t.branch.toUpperCase()}</span>
        ${escapeHtml(t.reference_id)}: "${escapeHtml(t.feedback)}"
      </button>`,
    )
    .join('<span class="sep">→</span>');
  return `<div class="crumbs">${crumbs}</div>
    <div class="session-actions">
      <button data-action="export-session">export session</button>
      <label class="import-label">import + replay<input data-role="import-file" type="file" accept="application/json"></label>
    </div>`;
}

export function errorBanner(message: string, canRetry: boolean): string {
  return `<div class="error-box">
    <span>${escapeHtml(message)}</span>
    ${canRetry ? '<button data-action="retry">retry</button>' : ''}
    <button data-action="dismiss-error">dismiss</button>
  </div>`;
}

export function appShell(): string {
  return `
    <header>
      <h1>garment retrieval workbench</h1>
      <div id="health" class="health"></div>
    </header>
    <div id="error"></div>
    <main>
      <section id="gallery-pane">
        <h2>gallery</h2>
        <div id="gallery"></div>
      </section>
      <section id="work-pane">
        <h2>reference</h2>
        <div id="reference"></div>
        <h2>feedback</h2>
        <div id="composer"></div>
        <h2>results</h2>
        <div id="results"></div>
        <h2>session</h2>
        <div id="timeline"></div>
      </section>
    </main>`;
}
