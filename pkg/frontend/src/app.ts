// Single-page dashboard: scenario list and editor, live monitor, data tools.
// All engine access goes through ApiClient and the WS stream; this file is
// DOM glue only, the logic lives in the imported modules.

import { ApiClient, ApiError } from "./api.js";
import { DataTools, EXPORT_FORMATS } from "./datatools.js";
import { ScenarioEditor, emptyForm } from "./editor.js";
import { MonitorStore, statusColor } from "./monitor.js";
import { joinCodeSvg } from "./qr.js";
import { LiveFeed } from "./wsfeed.js";

const params = new URLSearchParams(location.search);
const apiBase = params.get("api") ?? `${location.protocol}//${location.host}`;
const token = params.get("token") ?? undefined;
const api = new ApiClient(apiBase, token);

const root = document.getElementById("app")!;
let feed: LiveFeed | null = null;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text = ""): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function message(text: string, kind: "ok" | "err" = "ok") {
  const bar = document.getElementById("statusbar")!;
  bar.textContent = text;
  bar.className = kind;
}

async function guard<T>(work: () => Promise<T>): Promise<T | undefined> {
  try {
    return await work();
  } catch (e) {
    message(e instanceof ApiError ? `${e.body.code} (${e.body.path})` : String(e), "err");
    return undefined;
  }
}

// -- scenario list ------------------------------------------------------------

async function renderList() {
  feed?.close();
  root.replaceChildren();
  const heading = el("h2", {}, "Scenarios");
  root.append(heading);
  const rows = await guard(() => api.list());
  if (!rows) return;
  const table = el("table");
  for (const row of rows) {
    const tr = el("tr");
    const chip = el("td", { class: `chip ${statusColor(row.status.state)}` },
      row.status.state);
    const name = el("td", {}, `${row.scenario_id} — ${row.name}`);
    const actions = el("td");
    const startStop = el("button", {},
      row.status.state === "running" ? "stop" : "start");
    startStop.onclick = () => guard(async () => {
      if (row.status.state === "running") await api.stop(row.scenario_id);
      else await api.start(row.scenario_id);
      await renderList();
    });
    const monitor = el("button", {}, "monitor");
    monitor.onclick = () => renderMonitor(row.scenario_id);
    const dataBtn = el("button", {}, "data");
    dataBtn.onclick = () => renderData(row.scenario_id);
    const editBtn = el("button", {}, "edit");
    editBtn.onclick = () => guard(async () => {
      if (row.status.state === "running") {
        message("stop scenario first", "err");
        return;
      }
      const { scenario } = await api.scenario(row.scenario_id);
      renderEditor(scenario);
    });
    actions.append(startStop, monitor, dataBtn, editBtn);
    tr.append(chip, name, actions);
    table.append(tr);
  }
  const newBtn = el("button", {}, "new scenario");
  newBtn.onclick = () => renderEditor();
  root.append(table, newBtn);
}

// -- editor -------------------------------------------------------------------

function renderEditor(doc?: Parameters<ScenarioEditor["load"]>[0]) {
  feed?.close();
  root.replaceChildren(el("h2", {}, "Scenario editor"));
  const editor = new ScenarioEditor(api);
  if (doc) editor.load(doc);
  else editor.state.form = emptyForm();

  const form = el("div", { class: "editor" });
  const fields: Array<[string, keyof typeof editor.state.form, string]> = [
    ["scenario id", "scenarioId", "$.scenario_id"],
    ["name", "name", "$.name"],
    ["description", "description", "$.description"],
    ["area lat", "areaLat", "$.area.center.lat"],
    ["area lon", "areaLon", "$.area.center.lon"],
    ["area radius m", "areaRadiusM", "$.area.radius_m"],
    ["period start (ms)", "periodStart", "$.period"],
    ["period end (ms)", "periodEnd", "$.period"],
  ];
  const inputs = new Map<string, HTMLInputElement>();
  const notes = new Map<string, HTMLElement>();
  for (const [label, key, path] of fields) {
    const wrap = el("label", {}, label + " ");
    const input = el("input", { value: String(editor.state.form[key] ?? "") });
    const note = el("span", { class: "fieldnote" });
    input.oninput = () => {
      const value: unknown = input.value;
      const current = editor.state.form[key];
      (editor.state.form as Record<string, unknown>)[key as string] =
        typeof current === "number" ? Number(value) : value;
      void revalidate();
    };
    inputs.set(path, input);
    notes.set(path, note);
    wrap.append(input, note);
    form.append(wrap, el("br"));
  }

  const checkpointBox = el("textarea", { rows: "8", cols: "80" });
  checkpointBox.value = JSON.stringify(editor.document().motivation.static_requests, null, 1);
  checkpointBox.onchange = () => {
    try {
      const docs = JSON.parse(checkpointBox.value);
      editor.state.form.checkpoints = docs.map((c: any) => ({
        checkpointId: c.checkpoint_id, name: c.name,
        lat: c.fence.center.lat, lon: c.fence.center.lon, radiusM: c.fence.radius_m,
        basePoints: c.base_points, task: c.task,
        contributionLimit: c.contribution_limit ?? null,
        questionnaireId: c.questionnaire_id ?? null,
      }));
      void revalidate();
    } catch (e) {
      message(`checkpoint JSON: ${e}`, "err");
    }
  };
  form.append(el("h3", {}, "checkpoints (JSON rows)"), checkpointBox, el("br"));

  const submit = el("button", { disabled: "disabled" }, "deploy");
  const qrBox = el("div", { class: "qr" });

  async function revalidate() {
    const messages = await guard(() => editor.refreshValidation());
    if (!messages) return;
    for (const [path, note] of notes) {
      note.textContent = messages.get(path) ?? "";
    }
    const shown = new Set(notes.keys());
    const other = [...messages.entries()].filter(([p]) => !shown.has(p));
    message(other.length ? other.map(([p, m]) => `${m} at ${p}`).join("; ") : "valid",
      other.length ? "err" : "ok");
    if (editor.state.submitEnabled) submit.removeAttribute("disabled");
    else submit.setAttribute("disabled", "disabled");
  }

  submit.onclick = () => guard(async () => {
    const res = await editor.submit();
    message(`deployed ${res.scenarioId}`);
    qrBox.innerHTML = await joinCodeSvg(res.joinCodePayload);
    qrBox.append(el("div", { class: "payload" }, res.joinCodePayload));
  });

  root.append(form, submit, qrBox);
  void revalidate();
}

// -- live monitor ----------------------------------------------------------------

async function renderMonitor(sid: string) {
  feed?.close();
  root.replaceChildren(el("h2", {}, `Monitor: ${sid}`));
  const staleBadge = el("span", { class: "badge" }, "connecting");
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 400 400");
  svg.setAttribute("class", "map");
  const timelineBox = el("ul", { class: "timeline" });
  const rankingBox = el("table", { class: "ranking" });
  root.append(staleBadge, svg, el("h3", {}, "timeline"), timelineBox,
    el("h3", {}, "ranking"), rankingBox);

  const info = await guard(() => api.scenario(sid));
  if (!info) return;
  const area = info.scenario.area;
  const store = new MonitorStore();

  function project(lat: number, lon: number): [number, number] {
    const degPerM = 1 / 111_320;
    const span = area.radius_m * degPerM * 2.2;
    const x = 200 + ((lon - area.center.lon) * Math.cos(area.center.lat * Math.PI / 180)) / span * 400;
    const y = 200 - (lat - area.center.lat) / span * 400;
    return [x, y];
  }

  function redraw() {
    svg.replaceChildren();
    for (const cp of info!.scenario.motivation.static_requests) {
      const [x, y] = project(cp.fence.center.lat, cp.fence.center.lon);
      const ring = document.createElementNS(svg.namespaceURI, "circle");
      ring.setAttribute("cx", String(x));
      ring.setAttribute("cy", String(y));
      ring.setAttribute("r", "12");
      ring.setAttribute("class", "fence");
      svg.append(ring);
    }
    for (const pin of store.pins) {
      const [x, y] = project(pin.lat, pin.lon);
      const dot = document.createElementNS(svg.namespaceURI, "circle");
      dot.setAttribute("cx", String(x));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "3");
      dot.setAttribute("class", "pin");
      svg.append(dot);
    }
    timelineBox.replaceChildren(
      ...store.timeline.slice(-12).map((t) =>
        el("li", {}, `${t.participantId}: ${t.text}`)));
    rankingBox.replaceChildren(...store.ranking.map((r) => {
      const tr = el("tr");
      tr.append(el("td", {}, `#${r.rank}`), el("td", {}, r.participant_id),
        el("td", {}, String(r.points)));
      return tr;
    }));
  }

  async function refreshRanking() {
    const res = await guard(() => api.ranking(sid));
    if (res) store.setRanking(res.ranking);
  }

  feed = new LiveFeed(
    api.streamUrl(sid),
    (frame) => {
      store.applyFrame(frame);
      if (store.rankingStale) void refreshRanking();
      redraw();
    },
    () => {
      staleBadge.textContent = "live";
      staleBadge.className = "badge live";
      // reconcile after any gap: re-query and merge without duplicates
      void guard(async () => {
        const res = await api.reports(sid, { page_size: 100 });
        store.reconcile(res.reports);
        redraw();
      });
    },
    { socketFactory: (url) => new WebSocket(url) as never },
  );
  const origOnClose = feed;
  // surface the stale badge on drops
  const badgeTimer = setInterval(() => {
    if (!origOnClose.stale) return;
    staleBadge.textContent = "stale — reconnecting";
    staleBadge.className = "badge stale";
  }, 500);
  (feed as unknown as { badgeTimer: unknown }).badgeTimer = badgeTimer;
  feed.connect();
  await refreshRanking();
  redraw();
}

// -- data tools ----------------------------------------------------------------------

async function renderData(sid: string) {
  feed?.close();
  root.replaceChildren(el("h2", {}, `Data tools: ${sid}`));
  const tools = new DataTools(api, sid);
  await guard(() => tools.refresh());

  const table = el("table", { class: "data" });

  function redraw() {
    table.replaceChildren();
    const head = el("tr");
    for (const h of ["report", "kind", "labels", "excluded", "actions"]) {
      head.append(el("th", {}, h));
    }
    table.append(head);
    for (const row of tools.rows) {
      const tr = el("tr", { class: row.report.excluded ? "excluded" : "" });
      tr.append(
        el("td", {}, row.report.report_id),
        el("td", {}, row.report.kind),
        el("td", {}, row.report.labels.join(", ") +
          (row.pendingLabel ? ` (+${row.pendingLabel}…)` : "")),
        el("td", {}, row.report.excluded ? "yes" : ""),
      );
      const actions = el("td");
      const labelBtn = el("button", {}, "label");
      labelBtn.onclick = () => {
        const label = prompt("label") ?? "";
        if (label) void guard(() => tools.addLabel(row.report.report_id, label)).then(redraw);
      };
      const exclBtn = el("button", {}, row.report.excluded ? "include" : "exclude");
      exclBtn.onclick = () =>
        void guard(() => tools.setExcluded(row.report.report_id, !row.report.excluded))
          .then(redraw);
      actions.append(labelBtn, exclBtn);
      tr.append(actions);
      table.append(tr);
    }
  }

  const exports = el("div", { class: "exports" });
  for (const fmt of EXPORT_FORMATS) {
    const a = el("a", { href: tools.exportUrl(fmt), download: `${sid}.${fmt}` }, fmt);
    exports.append(a);
  }
  const restore = el("button", {}, "restore originals");
  restore.onclick = () => guard(async () => {
    const n = await tools.restoreAll();
    message(`restored ${n} edits`);
    redraw();
  });

  root.append(table, exports, restore);
  redraw();
}

// -- boot --------------------------------------------------------------------------------

const nav = document.getElementById("nav")!;
const listBtn = el("button", {}, "scenarios");
listBtn.onclick = () => void renderList();
nav.append(listBtn);
void renderList();
