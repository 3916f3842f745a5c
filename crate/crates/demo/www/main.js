import init, { DemoSample, p_mix_curve } from "./pkg/dynlmc_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

let sample = null;

function clear(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

// Draws ys[k] against its index, scaled into the band [top, top + height).
function line(ctx, ys, lo, hi, color, top = 0, height = ctx.canvas.height) {
  const w = ctx.canvas.width;
  const span = hi - lo || 1;
  ctx.strokeStyle = color;
  ctx.beginPath();
  let pen = false;
  ys.forEach((y, k) => {
    if (!Number.isFinite(y)) { pen = false; return; }
    const px = (k / Math.max(ys.length - 1, 1)) * w;
    const py = top + height - ((y - lo) / span) * height;
    pen ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    pen = true;
  });
  ctx.stroke();
}

function drawSeries() {
  const ctx = clear($("series"));
  const shown = Math.min(sample.channels(), 4);
  const band = ctx.canvas.height / shown;
  for (let i = 0; i < shown; i++) {
    const ys = sample.channel(i);
    let lo = Infinity, hi = -Infinity;
    for (const v of ys) { lo = Math.min(lo, v); hi = Math.max(hi, v); }
    line(ctx, Array.from(ys), lo, hi, palette[i % palette.length], i * band, band);
  }
  const wctx = clear($("weights"));
  for (let j = 0; j < sample.latents(); j++) {
    line(wctx, Array.from(sample.weight(0, j)), 0, 1, palette[j % palette.length]);
  }
}

function drawPair() {
  const a = num("pa"), b = num("pb");
  try {
    const path = sample.rolling_pair(a, b, num("window"), num("stride"));
    const ctx = clear($("pair"));
    ctx.strokeStyle = "#ccc";
    ctx.beginPath();
    ctx.moveTo(0, ctx.canvas.height / 2);
    ctx.lineTo(ctx.canvas.width, ctx.canvas.height / 2);
    ctx.stroke();
    line(ctx, Array.from(path), -1, 1, "#1f77b4");
    const drift = sample.drift(num("window"), num("stride"));
    $("drift").textContent = `drift ${drift.toFixed(4)}`;
  } catch (e) {
    $("drift").textContent = String(e.message ?? e);
  }
  const maxLag = Math.max(1, Math.min(16, Math.floor((sample.length() - 1) / 2)));
  const counts = sample.lag_histogram(maxLag);
  const ctx = clear($("lags"));
  const top = Math.max(...counts, 1);
  const bw = ctx.canvas.width / counts.length;
  counts.forEach((c, k) => {
    ctx.fillStyle = k === maxLag ? "#d62728" : "#1f77b4";
    const h = (c / top) * (ctx.canvas.height - 14);
    ctx.fillRect(k * bw + 1, ctx.canvas.height - 14 - h, bw - 2, h);
    ctx.fillStyle = "#444";
    ctx.fillText(String(k - maxLag), k * bw + bw / 3, ctx.canvas.height - 2);
  });
}

function generate() {
  $("status").textContent = "";
  try {
    sample?.free();
    sample = new DemoSample(num("channels"), num("length"), num("rho"), num("sigma"), num("maxlag"), num("states"), num("seed"));
  } catch (e) {
    sample = null;
    $("status").textContent = String(e.message ?? e);
    return;
  }
  $("pa").max = $("pb").max = sample.channels() - 1;
  drawSeries();
  drawPair();
}

function drawSchedule() {
  const m = num("m");
  const curve = p_mix_curve(m, 2 * m);
  const ctx = clear($("schedule"));
  line(ctx, Array.from(curve), 0, 1.05, "#2ca02c");
  const sat = Math.ceil((m * (Math.E - 1)) / 2);
  const x = (sat / (2 * m)) * ctx.canvas.width;
  ctx.strokeStyle = "#aaa";
  ctx.beginPath();
  ctx.moveTo(x, 0);
  ctx.lineTo(x, ctx.canvas.height);
  ctx.stroke();
  $("mval").textContent = `M = ${m}, p_mix(M/2) = ${curve[Math.floor(m / 2)].toFixed(4)}, saturates at i = ${sat}`;
}

await init();
$("generate").addEventListener("click", generate);
$("correlate").addEventListener("click", () => sample && drawPair());
$("m").addEventListener("input", drawSchedule);
generate();
drawSchedule();
