// Application wiring: one ReviewSession drives the queue list, the canvas
// overlay, the stopwatch, and the decision buttons.  Keyboard shortcuts and
// buttons dispatch through the same command table.

import { ReviewApi } from "./api.js";
import { OverlayCanvas } from "./canvas.js";
import { Command, KEY_BINDINGS, runCommand } from "./commands.js";
import { DecisionOutcome, ReviewSession } from "./session.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element: ${id}`);
  return node as T;
}

const api = new ReviewApi("");
const session = new ReviewSession(api);

const canvas = el<HTMLCanvasElement>("overlay");
const queueList = el<HTMLUListElement>("queue");
const titleEl = el<HTMLElement>("record-title");
const statusEl = el<HTMLElement>("record-status");
const badgeEl = el<HTMLElement>("badge-no-defects");
const stopwatchEl = el<HTMLElement>("stopwatch");
const noteEl = el<HTMLTextAreaElement>("reviewer-note");
const messageEl = el<HTMLElement>("message");
const conflictEl = el<HTMLElement>("conflict-banner");
const retryEl = el<HTMLButtonElement>("retry-image");

const overlay = new OverlayCanvas(
  canvas,
  session.editor,
  () => refresh(),
  () => {
    retryEl.hidden = false;
    showMessage("image failed to load", true);
  },
);

function showMessage(text: string, isError = false): void {
  messageEl.textContent = text;
  messageEl.className = isError ? "error" : "";
}

function refreshQueue(): void {
  queueList.replaceChildren(
    ...session.queueIds.map((id, i) => {
      const li = document.createElement("li");
      li.textContent = id;
      if (i === session.position) li.className = "current";
      li.addEventListener("click", () => {
        void session.goTo(id).then(onRecordLoaded, (err) => showMessage(String(err), true));
      });
      return li;
    }),
  );
}

function refresh(): void {
  const rec = session.current;
  refreshQueue();
  if (rec === null) {
    titleEl.textContent = "queue finished";
    statusEl.textContent = "";
    badgeEl.hidden = true;
    overlay.draw();
    return;
  }
  titleEl.textContent = `${rec.image_id} (v${rec.version})`;
  statusEl.textContent = rec.status;
  statusEl.className = `status-${rec.status}`;
  badgeEl.hidden = !session.noDefects;
  noteEl.value = session.reviewerNote;
  overlay.draw();
}

function onRecordLoaded(): void {
  const rec = session.current;
  conflictEl.hidden = true;
  retryEl.hidden = true;
  if (rec !== null) {
    overlay.setImage(api.imageUrl(rec.image_id), rec.width, rec.height);
  }
  refresh();
  showMessage("");
}

function onOutcome(outcome: DecisionOutcome | null): void {
  if (outcome === null) {
    refresh();
    return;
  }
  if (outcome.kind === "saved") {
    conflictEl.hidden = true;
    showMessage(`saved ${outcome.record.image_id} as ${outcome.record.status}`);
    if (outcome.done) {
      showMessage("queue finished");
      refresh();
    } else {
      onRecordLoaded();
    }
  } else {
    conflictEl.hidden = false;
    conflictEl.textContent =
      `version conflict: server is at v${outcome.actual} with ` +
      `${outcome.theirs.polygons.length} polygon(s). Your edits are kept on the ` +
      `canvas; decide again to submit them, or reload to take the server copy.`;
    refresh();
  }
}

function dispatch(cmd: Command): void {
  void runCommand(session, cmd).then(onOutcome, (err) => showMessage(String(err), true));
}

for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-cmd]")) {
  button.addEventListener("click", () => dispatch(button.dataset.cmd as Command));
}

document.addEventListener("keydown", (e) => {
  if (e.target instanceof HTMLTextAreaElement || e.target instanceof HTMLInputElement) return;
  const cmd = KEY_BINDINGS[e.key];
  if (cmd !== undefined) {
    e.preventDefault();
    dispatch(cmd);
  }
});

noteEl.addEventListener("input", () => {
  session.reviewerNote = noteEl.value;
});

el<HTMLButtonElement>("add-polygon").addEventListener("click", () => {
  overlay.addPolygonAtCenter();
});
el<HTMLButtonElement>("delete-polygon").addEventListener("click", () => {
  if (!overlay.deleteSelectedPolygon()) showMessage("click a vertex to select a polygon first");
});
el<HTMLButtonElement>("reload-record").addEventListener("click", () => {
  void session.reload().then(onRecordLoaded, (err) => showMessage(String(err), true));
});
retryEl.addEventListener("click", () => {
  const rec = session.current;
  if (rec !== null) {
    retryEl.hidden = true;
    overlay.retryImage(api.imageUrl(rec.image_id), rec.width, rec.height);
  }
});

setInterval(() => {
  stopwatchEl.textContent = `${session.elapsedSeconds().toFixed(1)}s`;
}, 250);

async function boot(): Promise<void> {
  try {
    const count = await session.start();
    if (count === 0) {
      showMessage("no records to review");
      refresh();
      return;
    }
    await session.next();
    onRecordLoaded();
  } catch (err) {
    showMessage(`failed to reach the review service: ${String(err)}`, true);
  }
}

void boot();
