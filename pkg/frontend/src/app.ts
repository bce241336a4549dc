/**
 * Single-page review console. Talks only to the service's /api endpoints;
 * configuration is limited to the base URL, the token, and a reviewer name
 * (query parameters, remembered in localStorage).
 */

import { ApiError, ReviewClient } from "./client.js";
import { OverlayRenderer, buildScene, type OverlayScene } from "./overlay.js";
import { encodeRuns, fillPolygon } from "./rle.js";
import { ReviewSession } from "./session.js";
import { ViewTransform } from "./view.js";
import type { AddedGeometry, PredictionDoc, RegistryClass } from "./types.js";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function configValue(key: string, fallback: string): string {
  const fromQuery = new URLSearchParams(window.location.search).get(key);
  if (fromQuery !== null) {
    try {
      localStorage.setItem(`pelvimark.${key}`, fromQuery);
    } catch {
      // storage can be unavailable; the query value still applies
    }
    return fromQuery;
  }
  try {
    return localStorage.getItem(`pelvimark.${key}`) ?? fallback;
  } catch {
    return fallback;
  }
}

type DrawMode =
  | { kind: "idle" }
  | { kind: "pan"; lastX: number; lastY: number }
  | { kind: "drag_landmark"; code: string; startX: number; startY: number; originX: number; originY: number }
  | { kind: "collect"; code: string; target: "added" | "mask_replaced"; points: [number, number][] };

class App {
  private client: ReviewClient;
  private registry: RegistryClass[] = [];
  private session: ReviewSession | null = null;
  private prediction: PredictionDoc | null = null;
  private view = new ViewTransform();
  private scene: OverlayScene | null = null;
  private renderer: OverlayRenderer;
  private imageEl = new Image();
  private imageUrl: string | null = null;
  private mode: DrawMode = { kind: "idle" };
  private visibleGroups: Set<string> | null = null;
  private selected: string | null = null;
  private classErrors = new Map<string, string>();
  private reviewer: string;

  constructor() {
    const base = configValue("api", window.location.origin);
    const token = configValue("token", "");
    this.reviewer = configValue("reviewer", "");
    this.client = new ReviewClient({ baseUrl: base, token });
    this.renderer = new OverlayRenderer($("overlay") as HTMLCanvasElement);
    this.bindEvents();
  }

  async boot(): Promise<void> {
    try {
      const registry = await this.client.getRegistry();
      this.registry = registry.classes;
      this.buildGroupFilter();
      const listing = await this.client.listImages();
      this.renderImageList(listing.images);
      if (listing.images.length > 0) {
        await this.selectImage(listing.images[0].image_id);
      } else {
        this.toast("service has no images", "warn");
      }
    } catch (error) {
      this.toast(`cannot reach service: ${describe(error)}`, "error");
    }
  }

  // --- image switching, with the explicit unsaved-buffer guard ---

  private async selectImage(imageId: string): Promise<void> {
    if (this.session?.dirty) {
      const save = window.confirm(
        `${this.session.pendingCount} unsaved correction(s) on ${this.session.imageId}. Save them before switching?`,
      );
      if (save) {
        const outcome = await this.session.save(this.client);
        if (outcome.kind !== "saved" && outcome.kind !== "nothing_to_save") {
          this.reportSave(outcome);
          return; // stay on the image until the buffer is safe
        }
      } else if (!window.confirm("Discard them instead? This cannot be undone.")) {
        return;
      } else {
        this.session.discardPending();
      }
    }

    try {
      const [record, prediction, render] = await Promise.all([
        this.client.getRecord(imageId),
        this.client.getPredictions(imageId),
        this.client.fetchRender(imageId),
      ]);
      this.session = new ReviewSession(record, this.registry, this.reviewer);
      this.prediction = prediction;
      this.classErrors.clear();
      this.mode = { kind: "idle" };
      if (this.imageUrl) URL.revokeObjectURL(this.imageUrl);
      this.imageUrl = URL.createObjectURL(render);
      this.imageEl.onload = () => {
        this.view = ViewTransform.fit(
          this.imageEl.naturalWidth,
          this.imageEl.naturalHeight,
          this.canvas().clientWidth,
          this.canvas().clientHeight,
        );
        this.redraw();
      };
      this.imageEl.src = this.imageUrl;
      this.renderer.clearCache();
      this.refreshPanels();
    } catch (error) {
      this.toast(`failed to load ${imageId}: ${describe(error)}`, "error");
    }
  }

  // --- drawing ---

  private canvas(): HTMLCanvasElement {
    return $("overlay") as HTMLCanvasElement;
  }

  private redraw(): void {
    if (!this.session) return;
    const canvas = this.canvas();
    const base = $("radiograph") as HTMLCanvasElement;
    const w = canvas.clientWidth;
    const h = canvas.clientHeight;
    canvas.width = w;
    canvas.height = h;
    base.width = w;
    base.height = h;

    const bctx = base.getContext("2d")!;
    bctx.clearRect(0, 0, w, h);
    const brightness = Number((($("brightness") as HTMLInputElement).value ?? "100")) / 100;
    const contrast = Number((($("contrast") as HTMLInputElement).value ?? "100")) / 100;
    bctx.filter = `brightness(${brightness}) contrast(${contrast})`;
    if (this.imageEl.naturalWidth) {
      const origin = this.view.toScreen({ x: 0, y: 0 });
      bctx.imageSmoothingEnabled = this.view.zoom < 1;
      bctx.drawImage(
        this.imageEl,
        origin.x,
        origin.y,
        this.imageEl.naturalWidth * this.view.zoom,
        this.imageEl.naturalHeight * this.view.zoom,
      );
    }

    this.scene = buildScene(
      this.registry,
      this.prediction,
      (code) => this.session!.effectiveFor(code),
      this.visibleGroups,
    );
    this.renderer.render(this.scene, this.view, this.selected);
    this.drawCollectOverlay();
    this.refreshPanels();
  }

  private drawCollectOverlay(): void {
    if (this.mode.kind !== "collect" || this.mode.points.length === 0) return;
    const ctx = this.canvas().getContext("2d")!;
    ctx.strokeStyle = "#f59e0b";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    this.mode.points.forEach(([x, y], i) => {
      const p = this.view.toScreen({ x, y });
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    });
    ctx.stroke();
    ctx.setLineDash([]);
  }

  // --- interaction ---

  private bindEvents(): void {
    const canvas = this.canvas();
    canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = ev.deltaY < 0 ? 1.2 : 1 / 1.2;
      this.view = this.view.zoomedAt(eventPoint(ev, canvas), factor);
      this.redraw();
    });
    canvas.addEventListener("mousedown", (ev) => this.onMouseDown(ev));
    canvas.addEventListener("mousemove", (ev) => this.onMouseMove(ev));
    window.addEventListener("mouseup", (ev) => this.onMouseUp(ev));
    canvas.addEventListener("dblclick", () => this.completeCollect());
    window.addEventListener("keydown", (ev) => {
      if (this.mode.kind !== "collect") return;
      if (ev.key === "Enter") this.completeCollect();
      if (ev.key === "Escape") {
        this.mode = { kind: "idle" };
        this.toast("drawing cancelled", "info");
        this.redraw();
      }
    });
    window.addEventListener("resize", () => this.redraw());
    window.addEventListener("beforeunload", (ev) => {
      if (this.session?.dirty) ev.preventDefault();
    });

    $("save").addEventListener("click", () => void this.saveNow());
    $("retry").addEventListener("click", () => void this.saveNow());
    $("discard").addEventListener("click", () => {
      if (!this.session?.dirty) return;
      if (window.confirm(`Discard ${this.session.pendingCount} unsaved correction(s)?`)) {
        this.session.discardPending();
        this.renderer.clearCache();
        this.redraw();
      }
    });
    $("finalize").addEventListener("click", () => void this.finalizeNow());
    $("export").addEventListener("click", () => void this.exportNow());
    $("brightness").addEventListener("input", () => this.redraw());
    $("contrast").addEventListener("input", () => this.redraw());
  }

  private onMouseDown(ev: MouseEvent): void {
    if (!this.session || !this.scene) return;
    const screen = eventPoint(ev, this.canvas());
    if (this.mode.kind === "collect") {
      const p = this.view.toOriginal(screen);
      this.mode.points.push([p.x, p.y]);
      if (this.collectClass()?.kind === "landmark") this.completeCollect();
      else this.redraw();
      return;
    }
    const hit = OverlayRenderer.pickLandmark(this.scene, this.view, screen);
    if (hit) {
      this.selected = hit.code;
      this.mode = {
        kind: "drag_landmark",
        code: hit.code,
        startX: screen.x,
        startY: screen.y,
        originX: hit.x,
        originY: hit.y,
      };
    } else {
      this.mode = { kind: "pan", lastX: screen.x, lastY: screen.y };
    }
  }

  private onMouseMove(ev: MouseEvent): void {
    const screen = eventPoint(ev, this.canvas());
    if (this.mode.kind === "pan") {
      this.view = this.view.pannedBy(screen.x - this.mode.lastX, screen.y - this.mode.lastY);
      this.mode = { kind: "pan", lastX: screen.x, lastY: screen.y };
      this.redraw();
    } else if (this.mode.kind === "drag_landmark" && this.session) {
      // live preview: stage the move continuously, the final mouseup state wins
      const delta = this.view.dragToOriginal(screen.x - this.mode.startX, screen.y - this.mode.startY);
      this.session.stage(this.mode.code, {
        type: "moved",
        point: [this.mode.originX + delta.x, this.mode.originY + delta.y],
      });
      this.redraw();
    }
  }

  private onMouseUp(ev: MouseEvent): void {
    if (this.mode.kind === "drag_landmark" && this.session) {
      const screen = eventPoint(ev, this.canvas());
      const dx = screen.x - this.mode.startX;
      const dy = screen.y - this.mode.startY;
      if (Math.hypot(dx, dy) < 3) {
        // a click, not a drag: toggle acceptance instead of moving
        this.session.unstage(this.mode.code);
        this.toggleAccept(this.mode.code);
      } else {
        const delta = this.view.dragToOriginal(dx, dy);
        this.session.stage(this.mode.code, {
          type: "moved",
          point: [this.mode.originX + delta.x, this.mode.originY + delta.y],
        });
      }
      this.mode = { kind: "idle" };
      this.redraw();
    } else if (this.mode.kind === "pan") {
      this.mode = { kind: "idle" };
    }
  }

  private toggleAccept(code: string): void {
    if (!this.session) return;
    const current = this.session.effectiveFor(code);
    if (current?.type === "accepted") this.session.stage(code, { type: "marked_missing" });
    else this.session.stage(code, { type: "accepted" });
    this.redraw();
  }

  private collectClass(): RegistryClass | undefined {
    if (this.mode.kind !== "collect") return undefined;
    const code = this.mode.code;
    return this.registry.find((c) => c.code === code);
  }

  private startCollect(code: string, target: "added" | "mask_replaced"): void {
    this.selected = code;
    this.mode = { kind: "collect", code, target, points: [] };
    const fc = this.registry.find((c) => c.code === code);
    const what = fc?.kind === "landmark" ? "click the point" : "click vertices, Enter or double-click to finish";
    this.toast(`drawing ${code}: ${what}`, "info");
  }

  private completeCollect(): void {
    if (this.mode.kind !== "collect" || !this.session) return;
    const { code, target, points } = this.mode;
    const fc = this.registry.find((c) => c.code === code);
    this.mode = { kind: "idle" };
    if (!fc) return;

    if (target === "mask_replaced") {
      const w = this.imageEl.naturalWidth;
      const h = this.imageEl.naturalHeight;
      if (points.length < 3 || !w) {
        this.toast("need at least 3 vertices for a mask", "warn");
      } else {
        const grid = fillPolygon(w, h, points);
        this.session.stage(code, { type: "mask_replaced", width: w, height: h, runs: encodeRuns(w, h, grid) });
        this.renderer.clearCache();
      }
    } else {
      let geometry: AddedGeometry | null = null;
      if (fc.kind === "landmark" && points.length >= 1) {
        geometry = { kind: "landmark", point: points[0] };
      } else if (fc.kind === "outline" && points.length >= 2) {
        geometry = { kind: "outline", points };
      } else if (fc.kind === "patch" && points.length >= 3) {
        geometry = { kind: "patch", points };
      }
      if (geometry) this.session.stage(code, { type: "added", geometry });
      else this.toast(`not enough points for ${fc.kind}`, "warn");
    }
    this.redraw();
  }

  // --- save / finalize / export ---

  private async saveNow(): Promise<void> {
    if (!this.session) return;
    this.reportSave(await this.session.save(this.client));
    this.redraw();
  }

  private reportSave(outcome: Awaited<ReturnType<ReviewSession["save"]>>): void {
    this.classErrors.clear();
    switch (outcome.kind) {
      case "saved":
        this.toast(`saved, revision ${outcome.revision}`, "info");
        break;
      case "nothing_to_save":
        this.toast("no unsaved corrections", "info");
        break;
      case "conflict":
        void this.handleConflict(outcome.currentRevision);
        break;
      case "rejected":
        for (const reason of outcome.reasons) {
          const code = reason.split(/[.:]/, 1)[0];
          this.classErrors.set(code, reason);
        }
        this.toast(`corrections rejected: ${outcome.reasons.length} problem(s)`, "error");
        break;
      case "offline":
        this.toast(`service unreachable; ${outcome.queued} correction(s) queued locally`, "warn");
        break;
    }
    this.refreshPanels();
  }

  private async handleConflict(currentRevision: number | null): Promise<void> {
    const msg =
      `Another reviewer changed this image (server revision ${currentRevision ?? "?"}). ` +
      "Reload their version? Your unsaved corrections will be dropped.";
    if (!this.session || !window.confirm(msg)) return;
    try {
      const record = await this.client.getRecord(this.session.imageId);
      this.session.resetFrom(record);
      this.renderer.clearCache();
      this.redraw();
      this.toast(`reloaded at revision ${record.revision}`, "info");
    } catch (error) {
      this.toast(`reload failed: ${describe(error)}`, "error");
    }
  }

  private async finalizeNow(): Promise<void> {
    if (!this.session) return;
    const outcome = await this.session.finalize(this.client);
    this.classErrors.clear();
    switch (outcome.kind) {
      case "curated":
        this.toast(`image curated at revision ${outcome.revision}`, "info");
        break;
      case "incomplete":
        for (const code of outcome.unresolved) this.classErrors.set(code, "unresolved");
        this.toast(`${outcome.unresolved.length} class(es) still unresolved`, "warn");
        break;
      case "conflict":
        void this.handleConflict(outcome.currentRevision);
        break;
      case "offline":
        this.toast("service unreachable; finalize not applied", "warn");
        break;
    }
    this.redraw();
  }

  private async exportNow(): Promise<void> {
    try {
      const manifest = (await this.client.exportTrainingPool()) as { count?: number };
      this.toast(`exported ${manifest.count ?? "?"} curated image(s)`, "info");
    } catch (error) {
      this.toast(`export failed: ${describe(error)}`, "error");
    }
  }

  // --- panels ---

  private buildGroupFilter(): void {
    const groups = [...new Set(this.registry.map((c) => c.group))];
    const host = $("groups");
    host.innerHTML = "";
    for (const group of groups) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = true;
      box.addEventListener("change", () => {
        const checked = [...host.querySelectorAll("input")].filter((b) => b.checked);
        this.visibleGroups =
          checked.length === groups.length
            ? null
            : new Set(checked.map((b) => b.parentElement!.textContent!.trim()));
        this.redraw();
      });
      label.append(box, ` ${group}`);
      host.append(label);
    }
  }

  private renderImageList(rows: { image_id: string; status: string; revision: number }[]): void {
    const host = $("images");
    host.innerHTML = "";
    for (const row of rows) {
      const item = document.createElement("button");
      item.className = `image-row status-${row.status}`;
      item.textContent = `${row.image_id} (${row.status}, r${row.revision})`;
      item.addEventListener("click", () => void this.selectImage(row.image_id));
      host.append(item);
    }
  }

  private refreshPanels(): void {
    if (!this.session) return;
    const missingHost = $("missing");
    missingHost.innerHTML = "";
    const missing = this.scene?.missing ?? [];
    for (const entry of missing) {
      const li = document.createElement("li");
      li.textContent = `${entry.code}${entry.resolved ? " (confirmed absent)" : ""}`;
      li.className = entry.resolved ? "resolved" : "unresolved";
      missingHost.append(li);
    }

    const classHost = $("classes");
    classHost.innerHTML = "";
    for (const fc of this.registry) {
      if (this.visibleGroups && !this.visibleGroups.has(fc.group)) continue;
      const row = document.createElement("div");
      row.className = "class-row";
      const state = this.session.effectiveFor(fc.code);
      const staged = this.session.stagedFor(fc.code) !== undefined;
      const name = document.createElement("span");
      name.textContent = `${fc.code}${staged ? " *" : ""}`;
      name.className = state ? `corr-${state.type}` : "corr-none";
      row.append(name);

      const accept = document.createElement("button");
      accept.textContent = state?.type === "accepted" ? "accepted" : "accept";
      accept.addEventListener("click", () => {
        this.session!.stage(fc.code, { type: "accepted" });
        this.redraw();
      });
      const absent = document.createElement("button");
      absent.textContent = state?.type === "marked_missing" ? "absent ✓" : "absent";
      absent.addEventListener("click", () => {
        this.session!.stage(fc.code, { type: "marked_missing" });
        this.redraw();
      });
      const draw = document.createElement("button");
      draw.textContent = "draw";
      draw.addEventListener("click", () =>
        this.startCollect(fc.code, fc.kind !== "landmark" && this.hasPredictedMask(fc.code) ? "mask_replaced" : "added"),
      );
      row.append(accept, absent, draw);

      const problem = this.classErrors.get(fc.code);
      if (problem) {
        const msg = document.createElement("span");
        msg.className = "class-error";
        msg.textContent = problem;
        row.append(msg);
      }
      classHost.append(row);
    }

    ($("finalize") as HTMLButtonElement).disabled = !this.session.canFinalize;
    ($("save") as HTMLButtonElement).disabled = !this.session.dirty;
    ($("discard") as HTMLButtonElement).disabled = !this.session.dirty;
    ($("retry") as HTMLElement).style.display = this.session.offline ? "" : "none";
    $("status").textContent =
      `${this.session.imageId} · revision ${this.session.revision} · ${this.session.status}` +
      (this.session.dirty ? ` · ${this.session.pendingCount} unsaved` : "");
  }

  private hasPredictedMask(code: string): boolean {
    return (this.prediction?.masks ?? []).some((m) => m.code === code);
  }

  private toast(message: string, level: "info" | "warn" | "error"): void {
    const host = $("toasts");
    const el = document.createElement("div");
    el.className = `toast toast-${level}`;
    el.textContent = message;
    host.append(el);
    setTimeout(() => el.remove(), level === "info" ? 3500 : 8000);
  }
}

function eventPoint(ev: MouseEvent, canvas: HTMLCanvasElement): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return { x: ev.clientX - rect.left, y: ev.clientY - rect.top };
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.status} ${error.detail.error ?? ""}`.trim();
  return error instanceof Error ? error.message : String(error);
}

window.addEventListener("DOMContentLoaded", () => {
  void new App().boot();
});
