import init, { certify, solve_son, compare_sinkhorn } from "./pkg/sonot_demo.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");
const colors = ["#1f77b4", "#d62728"];

function params() {
  return {
    seed: +$("seed").value,
    per: +$("per").value,
    omega: +$("omega").value,
    sep: +$("sep").value,
    t: +$("t").value,
    epochs: +$("epochs").value,
    eps: +$("eps").value,
  };
}

function showValues() {
  for (const el of document.querySelectorAll("input[type=range]")) {
    el.nextElementSibling.textContent = el.value;
  }
}

function frame(plot) {
  const all = plot.source.concat(plot.target);
  const xs = all.map((p) => p[0]);
  const ys = all.map((p) => p[1]);
  const x0 = Math.min(...xs) - 1, x1 = Math.max(...xs) + 1;
  const y0 = Math.min(...ys) - 1, y1 = Math.max(...ys) + 1;
  const s = Math.min(canvas.width / (x1 - x0), canvas.height / (y1 - y0));
  return (p) => [(p[0] - x0) * s, canvas.height - (p[1] - y0) * s];
}

function drawPlan(plot, plan, to, color, dash) {
  const peak = Math.max(...plan.flat());
  if (!(peak > 0)) return;
  ctx.setLineDash(dash);
  for (let i = 0; i < plan.length; i++) {
    for (let j = 0; j < plan[i].length; j++) {
      const a = plan[i][j] / peak;
      if (a < 1e-4) continue;
      const [ax, ay] = to(plot.source[i]);
      const [bx, by] = to(plot.target[j]);
      ctx.strokeStyle = color;
      ctx.globalAlpha = Math.max(a, 0.03);
      ctx.lineWidth = 0.5 + 2.5 * a;
      ctx.beginPath();
      ctx.moveTo(ax, ay);
      ctx.lineTo(bx, by);
      ctx.stroke();
    }
  }
  ctx.globalAlpha = 1;
  ctx.setLineDash([]);
}

function draw(plot, son, sk) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const to = frame(plot);
  if (sk) drawPlan(plot, sk.plan, to, "#ff7f0e", [4, 3]);
  if (son) drawPlan(plot, son.plan, to, "#222", []);
  plot.source.forEach((p, i) => {
    const [x, y] = to(p);
    ctx.fillStyle = colors[plot.source_labels[i]];
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.fill();
  });
  plot.target.forEach((p, j) => {
    const [x, y] = to(p);
    ctx.fillStyle = colors[plot.target_labels[j]];
    ctx.fillRect(x - 4, y - 4, 8, 8);
  });
  $("legend").textContent = sk ? "solid: SON plan, dashed orange: Sinkhorn plan" : son ? "solid: SON plan" : "";
}

function windowText(w) {
  const f = (v) => Number(v).toPrecision(4);
  return `delta* = ${f(w.delta)}\nwindow = (${f(w.lower)}, ${f(w.upper)})` +
    (w.nonempty ? "" : "\nwindow is empty: no block-recovery certificate");
}

function run(kind) {
  const p = params();
  try {
    if (kind === "certify") {
      const plot = JSON.parse(certify(p.seed, p.per, p.omega, p.sep));
      draw(plot, null, null);
      $("out").textContent = windowText(plot.window);
      return;
    }
    const v = JSON.parse(kind === "compare"
      ? compare_sinkhorn(p.seed, p.per, p.omega, p.sep, p.t, p.epochs, p.eps)
      : solve_son(p.seed, p.per, p.omega, p.sep, p.t, p.epochs));
    draw(v.plot, v.son, v.sinkhorn);
    const e = (x) => Number(x).toExponential(2);
    let text = windowText(v.plot.window) + `\nlambda = ${v.lambda.toPrecision(4)}` +
      `\nSON: off-block mass ${e(v.son.off_block)}, cost ${v.son.transport_cost.toPrecision(5)}`;
    if (v.sinkhorn) {
      text += `\nSinkhorn: off-block mass ${e(v.sinkhorn.off_block)}, min entry ${e(v.sinkhorn.min_entry)}`;
    }
    $("out").textContent = text;
  } catch (err) {
    $("out").textContent = `error: ${err}`;
  }
}

await init();
showValues();
for (const el of document.querySelectorAll("input[type=range]")) {
  el.addEventListener("input", showValues);
}
$("certify").onclick = () => run("certify");
$("solve").onclick = () => run("solve");
$("compare").onclick = () => run("compare");
run("solve");
