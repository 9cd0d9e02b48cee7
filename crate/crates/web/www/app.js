import init, { rasterize, simplify, disc_gradient } from "./pkg/r2cnn_web.js";

const GRID = 64;
const SCALE = 256 / GRID;

const draw = document.getElementById("draw");
const raster = document.getElementById("raster");
const dctx = draw.getContext("2d");
const rctx = raster.getContext("2d");
const status = document.getElementById("status");

// Points in raster coordinates, each [x, y, endsStroke].
let points = [];
let drawing = false;
let gradient = null;
let probe = null;

const mode = () => document.querySelector("input[name=mode]:checked").value;
const eps = () => parseFloat(document.getElementById("eps").value);
const flat = () => new Float64Array(points.flat());

function redrawSketch() {
  dctx.clearRect(0, 0, draw.width, draw.height);
  const max = gradient ? Math.max(...gradient.map(Math.abs), 1e-12) : 1;
  for (let i = 0; i < points.length; i++) {
    const [x, y, end] = points[i];
    const prevEnds = i === 0 || points[i - 1][2];
    if (!prevEnds) {
      const [px, py] = points[i - 1];
      dctx.strokeStyle = "#888";
      dctx.beginPath();
      dctx.moveTo(px * SCALE, py * SCALE);
      dctx.lineTo(x * SCALE, y * SCALE);
      dctx.stroke();
    }
    const g = gradient ? gradient[i] / max : 0;
    dctx.fillStyle = gradient ? `rgb(${Math.round(255 * Math.max(g, 0))},40,${Math.round(255 * Math.max(-g, 0))})` : "#000";
    dctx.fillRect(x * SCALE - 2, y * SCALE - 2, 4, 4);
    if (end && prevEnds) {
      dctx.strokeRect(x * SCALE - 3, y * SCALE - 3, 6, 6);
    }
  }
}

function redrawRaster() {
  rctx.clearRect(0, 0, raster.width, raster.height);
  if (points.length === 0) return;
  let values;
  try {
    values = rasterize(flat(), GRID, GRID, eps(), mode(), new Float64Array());
  } catch (e) {
    status.textContent = String(e);
    return;
  }
  const img = rctx.createImageData(GRID, GRID);
  let owned = 0;
  for (let k = 0; k < values.length; k++) {
    const v = Math.round(255 * (1 - Math.min(Math.max(values[k], 0), 1)));
    if (values[k] > 0) owned++;
    img.data.set([v, v, v, 255], 4 * k);
  }
  const tmp = new OffscreenCanvas(GRID, GRID);
  tmp.getContext("2d").putImageData(img, 0, 0);
  rctx.imageSmoothingEnabled = false;
  rctx.drawImage(tmp, 0, 0, raster.width, raster.height);
  if (probe) {
    rctx.strokeStyle = "#d22";
    rctx.beginPath();
    rctx.arc(probe.x * SCALE, probe.y * SCALE, probe.r * SCALE, 0, 2 * Math.PI);
    rctx.stroke();
  }
  status.textContent = `${points.length} points, ${owned} stroke pixels`;
}

function refresh() {
  if (probe && points.length) {
    gradient = Array.from(
      disc_gradient(flat(), GRID, GRID, eps(), mode(), new Float64Array(), probe.x, probe.y, probe.r),
    );
  } else {
    gradient = null;
  }
  redrawSketch();
  redrawRaster();
}

function position(ev, canvas) {
  const r = canvas.getBoundingClientRect();
  return [(ev.clientX - r.left) / SCALE, (ev.clientY - r.top) / SCALE];
}

draw.addEventListener("pointerdown", (ev) => {
  drawing = true;
  points.push([...position(ev, draw), 1]);
  refresh();
});
draw.addEventListener("pointermove", (ev) => {
  if (!drawing) return;
  const [x, y] = position(ev, draw);
  const last = points[points.length - 1];
  if (Math.hypot(x - last[0], y - last[1]) < 0.75) return;
  last[2] = 0;
  points.push([x, y, 1]);
  refresh();
});
window.addEventListener("pointerup", () => { drawing = false; });

raster.addEventListener("click", (ev) => {
  const [x, y] = position(ev, raster);
  probe = { x, y, r: parseFloat(document.getElementById("radius").value) };
  refresh();
});

document.getElementById("simplify").addEventListener("click", () => {
  if (!points.length) return;
  try {
    const before = points.length;
    const out = simplify(
      flat(),
      parseFloat(document.getElementById("rdp-eps").value),
      parseInt(document.getElementById("rdp-max").value, 10),
    );
    points = [];
    for (let i = 0; i < out.length; i += 3) points.push([out[i], out[i + 1], out[i + 2]]);
    refresh();
    status.textContent = `simplified ${before} -> ${points.length} points`;
  } catch (e) {
    status.textContent = String(e);
  }
});

document.getElementById("clear").addEventListener("click", () => {
  points = [];
  probe = null;
  refresh();
});
for (const id of ["eps", "radius"]) {
  document.getElementById(id).addEventListener("input", () => {
    document.getElementById("eps-value").textContent = eps().toFixed(1);
    if (probe) probe.r = parseFloat(document.getElementById("radius").value);
    refresh();
  });
}
document.querySelectorAll("input[name=mode]").forEach((el) => el.addEventListener("change", refresh));

await init();
status.textContent = "ready";
