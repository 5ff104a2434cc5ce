// Wires the three wasm operations to the sliders and canvases.
// Build the module first: wasm-pack build .. --target web --out-dir pkg

import init, { optimize_json, simulate_json, attack_json } from "../pkg/shuffledp_demo.js";

const $ = (id) => document.getElementById(id);
const DEMO_N = 20000;
const DEMO_M = 64;

function drawAxes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#d7dde6";
  ctx.beginPath();
  ctx.moveTo(40, 10); ctx.lineTo(40, h - 25); ctx.lineTo(w - 10, h - 25);
  ctx.stroke();
}

function drawBars(canvas, series, labels) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  drawAxes(ctx, w, h);
  const m = series[0].data.length;
  const ymax = Math.max(1e-9, ...series.flatMap((s) => s.data));
  const x0 = 42, x1 = w - 12, y0 = h - 26, y1 = 14;
  const bw = (x1 - x0) / m;
  series.forEach((s) => {
    ctx.fillStyle = s.fill ?? "transparent";
    ctx.strokeStyle = s.stroke;
    ctx.lineWidth = s.lineWidth ?? 1.5;
    ctx.beginPath();
    s.data.forEach((v, i) => {
      const y = y0 - ((y0 - y1) * v) / ymax;
      if (s.style === "bars") {
        ctx.fillRect(x0 + i * bw, y, Math.max(1, bw - 1), y0 - y);
      } else {
        const x = x0 + (i + 0.5) * bw;
        i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
      }
    });
    if (s.style !== "bars") ctx.stroke();
  });
  // legend
  ctx.font = "12px system-ui";
  let lx = x0 + 8;
  series.forEach((s, i) => {
    ctx.fillStyle = s.legendColor ?? s.stroke ?? s.fill;
    ctx.fillRect(lx, 18, 10, 10);
    ctx.fillStyle = "#444";
    ctx.fillText(labels[i], lx + 14, 27);
    lx += 14 + ctx.measureText(labels[i]).width + 18;
  });
}

function drawDensity(canvas, outline, b) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  drawAxes(ctx, w, h);
  const xs = outline.map((p) => p.x);
  const ys = outline.map((p) => p.y);
  const xmin = Math.min(...xs), xmax = Math.max(...xs);
  const ymax = Math.max(...ys) * 1.15;
  const px = (x) => 42 + ((w - 54) * (x - xmin)) / (xmax - xmin);
  const py = (y) => h - 26 - ((h - 44) * y) / ymax;
  // input domain shading
  ctx.fillStyle = "rgba(37, 99, 235, 0.07)";
  ctx.fillRect(px(0), 14, px(1) - px(0), h - 40);
  ctx.strokeStyle = "#2563eb";
  ctx.lineWidth = 2;
  ctx.beginPath();
  outline.forEach((p, i) => (i === 0 ? ctx.moveTo(px(p.x), py(p.y)) : ctx.lineTo(px(p.x), py(p.y))));
  ctx.stroke();
  ctx.font = "12px system-ui";
  ctx.fillStyle = "#68707c";
  ctx.fillText(`-b = ${(-b).toFixed(3)}`, px(-b), h - 10);
  ctx.fillText("0", px(0), h - 10);
  ctx.fillText("1", px(1) - 4, h - 10);
  ctx.fillText(`1+b = ${(1 + b).toFixed(3)}`, px(1 + b) - 70, h - 10);
  ctx.fillText("output density of the optimized randomizer under uniform input", 50, 28);
}

function fmt(v, digits = 4) {
  return Number(v).toFixed(digits);
}

function refreshRandomizer() {
  const eps = Math.pow(10, Number($("opt-eps").value));
  const n = Math.round(Math.pow(10, Number($("opt-n").value)));
  $("opt-eps-out").value = fmt(eps, 3);
  $("opt-n-out").value = n.toLocaleString();
  const res = JSON.parse(optimize_json(eps, 1e-5, n));
  if (res.error) {
    $("opt-stats").textContent = res.error;
    return;
  }
  drawDensity($("density"), res.density_outline, res.asp.b);
  const ssw = res.ssw ? ` · SSW for the same budget: b=${fmt(res.ssw.b)}, p=${fmt(res.ssw.p)}` : "";
  $("opt-stats").innerHTML =
    `ASP: <b>b=${fmt(res.asp.b)}, k=${fmt(res.asp.k, 2)}, p=${fmt(res.asp.p)}, q=${fmt(res.asp.q)}</b>` +
    ` · MI bound ${fmt(res.i_u)} nats (uniform-output bound ${fmt(res.prior_bound)})` +
    ` · amplification constraint ${res.constraint_lhs.toExponential(2)} ≤ δ=${res.delta}` + ssw;
}

async function runSimulate() {
  const btn = $("sim-run");
  btn.disabled = true;
  $("sim-stats").textContent = "running…";
  await new Promise((r) => setTimeout(r, 20));
  const eps = Math.pow(10, Number($("sim-eps").value));
  const seed = Number($("sim-seed").value);
  $("sim-eps-out").value = fmt(eps, 3);
  $("sim-seed-out").value = seed;
  const res = JSON.parse(simulate_json($("sim-protocol").value, eps, DEMO_N, DEMO_M, BigInt(seed)));
  if (res.error) {
    $("sim-stats").textContent = res.error;
  } else {
    drawBars($("estimate"), [
      { data: res.truth, style: "bars", fill: "rgba(37, 99, 235, 0.35)" },
      { data: res.estimate, stroke: "#dc2626" },
    ], ["true distribution", "estimate"]);
    $("sim-stats").innerHTML =
      `n=${DEMO_N.toLocaleString()}, m=${DEMO_M} · W1 error <b>${fmt(res.w1, 3)}</b> · params ${JSON.stringify(res.params)}`;
  }
  btn.disabled = false;
}

async function runAttack() {
  const btn = $("atk-run");
  btn.disabled = true;
  $("atk-stats").textContent = "running…";
  await new Promise((r) => setTimeout(r, 20));
  const beta = Number($("atk-beta").value);
  const target = Number($("atk-target").value);
  $("atk-beta-out").value = fmt(beta, 2);
  $("atk-target-out").value = fmt(target, 2);
  const res = JSON.parse(attack_json(
    $("atk-protocol").value, 0.1, DEMO_N, DEMO_M, beta, target,
    Number($("atk-divisor").value), 7n,
  ));
  if (res.error) {
    $("atk-stats").textContent = res.error;
  } else {
    drawBars($("attack"), [
      { data: res.truth, style: "bars", fill: "rgba(37, 99, 235, 0.35)" },
      { data: res.attacked, stroke: "#dc2626" },
      { data: res.ideal, stroke: "#059669", lineWidth: 1 },
    ], ["true", "attacked estimate", "attacker ideal"]);
    const color = res.riar > 0.8 ? "var(--ok)" : "var(--warn)";
    $("atk-stats").innerHTML =
      `RIAR <b class="riar-badge" style="color:${color}">${fmt(res.riar, 3)}</b>` +
      ` (W1 to ideal: attacked ${fmt(res.w1_attacked_vs_ideal, 2)} vs honest ${fmt(res.w1_true_vs_ideal, 2)})` +
      ` · ε=0.1 · params ${JSON.stringify(res.params)}`;
  }
  btn.disabled = false;
}

init().then(() => {
  $("loading").remove();
  refreshRandomizer();
  $("opt-eps").addEventListener("input", refreshRandomizer);
  $("opt-n").addEventListener("input", refreshRandomizer);
  $("sim-run").addEventListener("click", runSimulate);
  $("atk-run").addEventListener("click", runAttack);
  $("sim-eps").addEventListener("input", () => ($("sim-eps-out").value = fmt(Math.pow(10, Number($("sim-eps").value)), 3)));
  $("sim-seed").addEventListener("input", () => ($("sim-seed-out").value = $("sim-seed").value));
  $("atk-beta").addEventListener("input", () => ($("atk-beta-out").value = fmt(Number($("atk-beta").value), 2)));
  $("atk-target").addEventListener("input", () => ($("atk-target-out").value = fmt(Number($("atk-target").value), 2)));
  runSimulate();
  runAttack();
});
