import init, { Demo } from "./pkg/divetrack_web.js";

const $ = (id) => document.getElementById(id);
const HSV = [
  ["h_low", 0, 360, 1, 0],
  ["h_high", 0, 360, 1, 45],
  ["s_low", 0, 1, 0.01, 0.15],
  ["s_high", 0, 1, 0.01, 0.9],
  ["v_low", 0, 1, 0.01, 0.25],
  ["v_high", 0, 1, 0.01, 1],
];

let demo = null;

function status(text) {
  $("status").textContent = text;
}

function paint(canvas, w, h, rgba) {
  canvas.width = w;
  canvas.height = h;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
  return ctx;
}

function hsvValues() {
  return HSV.map(([key]) => parseFloat($(key).value));
}

function drawPath() {
  const est = demo.displacement();
  const truth = demo.truth_displacement();
  const c = $("path");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const xs = [...est.filter((_, i) => i % 2 === 0), ...truth.filter((_, i) => i % 2 === 0)];
  const ys = [...est.filter((_, i) => i % 2 === 1), ...truth.filter((_, i) => i % 2 === 1)];
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys) - 5, Math.max(...ys) + 5];
  const px = (x) => 10 + ((x - x0) / (x1 - x0 || 1)) * (c.width - 20);
  const py = (y) => 10 + ((y - y0) / (y1 - y0 || 1)) * (c.height - 20);
  const line = (pts, colour) => {
    ctx.strokeStyle = colour;
    ctx.beginPath();
    for (let i = 0; i < pts.length; i += 2) {
      const f = i === 0 ? "moveTo" : "lineTo";
      ctx[f](px(pts[i]), py(pts[i + 1]));
    }
    ctx.stroke();
  };
  line(truth, "#999");
  line(est, "#c00");
  ctx.fillStyle = "#333";
  ctx.fillText("camera displacement: truth (grey), estimate (red)", 12, c.height - 4);
}

function drawThreshold() {
  if (!demo) return;
  const k = parseInt($("frame").value, 10);
  $("frame-val").textContent = k;
  try {
    const rgba = demo.threshold_rgba(k, ...hsvValues());
    paint($("threshold"), demo.frame_width(), demo.frame_height(), rgba);
  } catch (e) {
    status(`threshold: ${e.message ?? e}`);
  }
}

function build() {
  const seed = parseInt($("seed").value, 10) || 0;
  const shake = parseInt($("shake").value, 10);
  status("registering frames...");
  // Let the status repaint before the blocking call.
  setTimeout(() => {
    const t0 = performance.now();
    try {
      demo?.free();
      demo = new Demo(seed, shake);
    } catch (e) {
      status(`build failed: ${e.message ?? e}`);
      return;
    }
    const ms = performance.now() - t0;
    const ctx = paint($("panorama"), demo.panorama_width(), demo.panorama_height(), demo.panorama_rgba());
    ctx.strokeStyle = "#06c";
    ctx.beginPath();
    ctx.moveTo(0, demo.water_line());
    ctx.lineTo(demo.panorama_width(), demo.water_line());
    ctx.stroke();
    $("mosaic-info").textContent =
      `${demo.frame_count()} frames, panorama ${demo.panorama_width()}x${demo.panorama_height()}, ` +
      `displacement RMSE ${demo.displacement_rmse().toFixed(3)} px, ` +
      `never written ${(100 * demo.never_written_fraction()).toFixed(2)}%, ${ms.toFixed(0)} ms`;
    drawPath();
    $("frame").max = demo.frame_count() - 1;
    drawThreshold();
    status("ready");
  }, 20);
}

function track() {
  if (!demo) return;
  try {
    const view = demo.track(...hsvValues(), parseInt($("window").value, 10));
    $("plot").innerHTML = view.svg();
    $("report").textContent = view.report();
    $("track-info").textContent =
      `${view.valid()}/${demo.frame_count()} frames valid, ` +
      `barycentre RMSE raw ${view.raw_rmse().toFixed(3)} px, smoothed ${view.smoothed_rmse().toFixed(3)} px`;
    view.free();
  } catch (e) {
    status(`track: ${e.message ?? e}`);
  }
}

function hsvControls() {
  for (const [key, min, max, step, value] of HSV) {
    const label = document.createElement("label");
    label.innerHTML = `${key} <input id="${key}" type="number" min="${min}" max="${max}" step="${step}" value="${value}">`;
    $("hsv").appendChild(label);
  }
  $("hsv").addEventListener("input", drawThreshold);
}

await init();
hsvControls();
$("shake").addEventListener("input", () => ($("shake-val").textContent = $("shake").value));
$("window").addEventListener("input", () => ($("window-val").textContent = $("window").value));
$("frame").addEventListener("input", drawThreshold);
$("build").addEventListener("click", build);
$("track").addEventListener("click", track);
build();
