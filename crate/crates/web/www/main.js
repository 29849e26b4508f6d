import init, { analyticBerVsPulseRate, simulateBerVsPulseRate, rhoHistogram } from "./pkg/irgain_web.js";

const $ = (id) => document.getElementById(id);
const canvas = $("plot");
const ctx = canvas.getContext("2d");
const M = { left: 70, right: 20, top: 20, bottom: 45 };
let curves = [];

function link() {
  return {
    n: Number($("n").value),
    k: Number($("k").value),
    snr: Number($("snr").value),
    offset: Number($("offset").value),
    coded: $("coded").checked,
    taps: new Float64Array($("taps").value.split(/[\s,]+/).filter((s) => s).map(Number)),
  };
}

function records(flat, width) {
  const out = [];
  for (let i = 0; i < flat.length; i += width) out.push(Array.from(flat.slice(i, i + width)));
  return out;
}

function status(text) {
  $("status").textContent = text;
}

function axes(xs, ylo, yhi, xlabel, logx, logy) {
  const w = canvas.width - M.left - M.right;
  const h = canvas.height - M.top - M.bottom;
  const tx = (x) => (logx ? Math.log2(x) : x);
  const ty = (y) => (logy ? Math.log10(y) : y);
  const x0 = tx(Math.min(...xs)), x1 = Math.max(tx(Math.max(...xs)), x0 + 1);
  const y0 = ty(ylo), y1 = ty(yhi);
  const px = (x) => M.left + ((tx(x) - x0) / (x1 - x0)) * w;
  const py = (y) => M.top + ((y1 - ty(Math.max(y, ylo))) / (y1 - y0)) * h;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#000";
  ctx.strokeRect(M.left, M.top, w, h);
  ctx.fillStyle = "#000";
  ctx.font = "12px sans-serif";
  ctx.textAlign = "center";
  const every = Math.ceil(xs.length / 16);
  xs.forEach((x, i) => i % every === 0 && ctx.fillText(String(x), px(x), M.top + h + 16));
  ctx.fillText(xlabel, M.left + w / 2, canvas.height - 8);
  ctx.textAlign = "right";
  if (logy) {
    for (let d = Math.ceil(y0); d <= y1; d++) {
      const y = M.top + ((y1 - d) / (y1 - y0)) * h;
      ctx.strokeStyle = "#ddd";
      ctx.beginPath(); ctx.moveTo(M.left, y); ctx.lineTo(M.left + w, y); ctx.stroke();
      ctx.fillText(`1e${d}`, M.left - 6, y + 4);
    }
  } else {
    for (let i = 0; i <= 4; i++) {
      const v = ylo + ((yhi - ylo) * i) / 4;
      ctx.fillText(v.toFixed(3), M.left - 6, py(v) + 4);
    }
  }
  return { px, py };
}

function line(pts, color, dashed, px, py) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.setLineDash(dashed ? [6, 4] : []);
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
  ctx.stroke();
  ctx.setLineDash([]);
}

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

function drawCurves() {
  const pts = curves.flatMap((c) => c.points.filter(([, y]) => y > 0 && Number.isFinite(y)));
  if (!pts.length) return;
  const xs = [...new Set(pts.map(([x]) => x))].sort((a, b) => a - b);
  const lo = Math.pow(10, Math.floor(Math.log10(Math.min(...pts.map(([, y]) => y)))));
  const hi = Math.pow(10, Math.ceil(Math.log10(Math.max(...pts.map(([, y]) => y)))));
  const { px, py } = axes(xs, Math.max(lo, 1e-6), Math.min(Math.max(hi, lo * 10), 1), "pulse rate N_f", true, true);
  curves.forEach((c, i) => {
    const color = COLORS[i % COLORS.length];
    line(c.points.filter(([, y]) => Number.isFinite(y)), color, c.dashed, px, py);
    ctx.fillStyle = color;
    ctx.textAlign = "left";
    ctx.fillText(c.label, M.left + 10, M.top + 16 + 16 * i);
  });
}

function describe(l) {
  return `K=${l.k} ${l.snr}dB ${l.coded ? "coded" : "uncoded"} h=[${Array.from(l.taps).join(" ")}]`;
}

$("analytic").onclick = () => {
  const l = link();
  try {
    const recs = records(analyticBerVsPulseRate(l.n, l.k, l.snr, l.offset, l.coded, l.taps), 2);
    curves.push({ label: `analytic MF ${describe(l)}`, points: recs, dashed: true });
    drawCurves();
    status("");
  } catch (e) {
    status(String(e));
  }
};

$("simulate").onclick = () => {
  const l = link();
  const det = $("det").value;
  status("simulating...");
  setTimeout(() => {
    try {
      const recs = records(
        simulateBerVsPulseRate(l.n, l.k, l.snr, l.offset, l.coded, l.taps, det, Number($("trials").value), Number($("seed").value)),
        4,
      );
      curves.push({ label: `${det} ${describe(l)}`, points: recs.map(([x, y]) => [x, y]), dashed: false });
      drawCurves();
      status("");
    } catch (e) {
      status(String(e));
    }
  }, 10);
};

$("hist").onclick = () => {
  const l = link();
  try {
    const recs = records(rhoHistogram(l.n, Number($("nf").value), l.coded, Number($("samples").value), Number($("seed").value)), 3);
    curves = [];
    const xs = recs.map((r) => r[0]);
    const ymax = Math.max(...recs.map((r) => Math.max(r[1], r[2])));
    const { px, py } = axes(xs, 0, ymax * 1.05, "cross-correlation", false, false);
    const bw = Math.max(2, (px(xs[xs.length - 1]) - px(xs[0])) / Math.max(xs.length, 1) - 2);
    ctx.fillStyle = "#9ecae1";
    for (const [x, p] of recs) ctx.fillRect(px(x) - bw / 2, py(p), bw, py(0) - py(p));
    line(recs.map(([x, , q]) => [x, q]), "#d62728", false, px, py);
    status(`N_f=${$("nf").value}: bars are simulated, the line is the normal approximation`);
  } catch (e) {
    status(String(e));
  }
};

await init();
status("ready");
