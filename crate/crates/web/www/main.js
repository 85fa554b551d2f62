import init, { signalRates, amplitudeMap, coherenceTrace } from "./pkg/superrotor_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const status = (msg, bad) => {
  $("status").textContent = msg;
  $("status").className = bad ? "err" : "";
};

function axes(ctx, w, h, pad, xl, yl) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(xl, w / 2, h - 8);
  ctx.fillText(yl, 6, pad - 10);
}

function plot(canvas, series, opts) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  const tx = opts.logx ? Math.log10 : (x) => x;
  const ty = opts.logy ? Math.log10 : (y) => y;
  const pts = series.flatMap((s) => s.points).filter(([x, y]) => (!opts.logx || x > 0) && (!opts.logy || y > 0));
  const xs = pts.map((p) => tx(p[0]));
  const ys = pts.map((p) => ty(p[1]));
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (x) => pad + ((tx(x) - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((ty(y) - y0) / (y1 - y0 || 1)) * (h - 2 * pad);
  axes(ctx, w, h, pad, opts.xlabel, opts.ylabel);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash || []);
    ctx.beginPath();
    s.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.fillText(`${opts.xlabel}: ${x0.toPrecision(3)} .. ${x1.toPrecision(3)}${opts.logx ? " (log10)" : ""}`, pad, 14);
}

function drawRates() {
  const r = signalRates(num("jmax"), num("ratio"));
  const points = Array.from(r, (g, i) => [i + 2, g]);
  plot($("rates"), [{ points, color: "#1f5fbf" }], { xlabel: "j", ylabel: "Gamma_j", logx: true, logy: true });
  status(`Gamma_j for j = 2..${r.length + 1}`);
}

function drawMap() {
  const nt = 45, np = 90;
  const m = amplitudeMap(num("mapj"), num("ratio"), nt, np);
  const canvas = $("map");
  const ctx = canvas.getContext("2d");
  const cw = canvas.width / np, ch = canvas.height / nt;
  const lo = Math.min(...m), hi = Math.max(...m);
  for (let i = 0; i < nt; i++) {
    for (let k = 0; k < np; k++) {
      const v = (m[i * np + k] - lo) / (hi - lo || 1);
      ctx.fillStyle = `hsl(${240 - 240 * v}, 80%, ${25 + 45 * v}%)`;
      ctx.fillRect(k * cw, i * ch, cw + 1, ch + 1);
    }
  }
  status(`|F| over (theta down, phi across): ${lo.toPrecision(4)} .. ${hi.toPrecision(4)}`);
}

function drawCoherence() {
  const v = coherenceTrace(num("cohj"), num("ratio"), num("life"), 200);
  const got = [], law = [];
  for (let i = 0; i < v.length; i += 3) {
    got.push([v[i], v[i + 1]]);
    law.push([v[i], v[i + 2]]);
  }
  plot($("coh"), [
    { points: got, color: "#1f5fbf" },
    { points: law, color: "#bf5f1f", dash: [5, 4] },
  ], { xlabel: "t", ylabel: "|rho_(j,j-2)|  (dashed: exp(-gamma t)/2)", logy: true });
  status(`${got.length} samples`);
}

const guard = (f) => () => {
  try {
    f();
  } catch (e) {
    status(e.message ?? String(e), true);
  }
};

await init();
$("rates-go").onclick = guard(drawRates);
$("map-go").onclick = guard(drawMap);
$("coh-go").onclick = guard(drawCoherence);
guard(drawRates)();
