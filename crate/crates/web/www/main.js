import init, { Demo } from './pkg/cnmf_web.js';

const $ = (id) => document.getElementById(id);
let demo;
let song;

function status(text, error = false) {
  $('status').textContent = text;
  $('status').className = error ? 'error' : '';
}

// Long calls block the page; give it a frame to paint the status first.
async function busy(text, work) {
  status(text);
  await new Promise((r) => setTimeout(r, 30));
  const started = performance.now();
  try {
    work();
    status(`${text.replace('...', '')} done in ${((performance.now() - started) / 1000).toFixed(1)} s`);
  } catch (e) {
    status(e.message ?? String(e), true);
  }
}

function heat(v) {
  // Dark blue through orange to pale yellow.
  const r = Math.round(255 * Math.min(1, 1.6 * v));
  const g = Math.round(255 * Math.max(0, Math.min(1, 1.8 * v - 0.5)));
  const b = Math.round(255 * Math.max(0, 0.45 - v) + 255 * Math.max(0, v - 0.85) * 3);
  return [r, g, Math.min(255, b)];
}

// Draws `cols x rows` values (value(c, r), r = 0 at the bottom) into a box.
function drawImage(ctx, x0, y0, w, h, cols, rows, value) {
  const img = ctx.createImageData(cols, rows);
  for (let c = 0; c < cols; c++) {
    for (let r = 0; r < rows; r++) {
      const [R, G, B] = heat(value(c, r));
      const k = 4 * ((rows - 1 - r) * cols + c);
      img.data.set([R, G, B, 255], k);
    }
  }
  const tmp = new OffscreenCanvas(cols, rows);
  tmp.getContext('2d').putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, x0, y0, w, h);
}

function clear(canvas) {
  const ctx = canvas.getContext('2d');
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = '12px system-ui, sans-serif';
  return ctx;
}

function drawTemplates(view) {
  const canvas = $('templates');
  const ctx = clear(canvas);
  const n = view.pitches.length;
  const gap = 8;
  const w = Math.min(90, (canvas.width - gap * (n + 1)) / n);
  view.templates.forEach((img, q) => {
    const x = gap + q * (w + gap);
    drawImage(ctx, x, 4, w, canvas.height - 24, view.tau, view.shown_bins, (c, r) => img[r * view.tau + c]);
    ctx.fillStyle = '#222';
    ctx.fillText(`MIDI ${view.pitches[q]}`, x, canvas.height - 6);
  });

  const tc = $('traces');
  const tx = clear(tc);
  const all = view.traces.flat().filter((c) => c > 0);
  const lo = Math.log10(Math.min(...all));
  const hi = Math.log10(Math.max(...all));
  const longest = Math.max(...view.traces.map((t) => t.length));
  const pad = 30;
  view.traces.forEach((trace, q) => {
    tx.strokeStyle = `hsl(${(q * 360) / view.traces.length}, 65%, 45%)`;
    tx.beginPath();
    trace.forEach((c, i) => {
      const x = pad + ((tc.width - 2 * pad) * i) / Math.max(1, longest - 1);
      const y = 8 + (tc.height - 30) * (1 - (Math.log10(c) - lo) / Math.max(1e-9, hi - lo));
      i ? tx.lineTo(x, y) : tx.moveTo(x, y);
    });
    tx.stroke();
  });
  tx.fillStyle = '#222';
  tx.fillText('training cost (log scale) per iteration', pad, tc.height - 6);
}

function drawSpectrogram(view) {
  const canvas = $('spectrogram');
  const ctx = clear(canvas);
  const frames = view.spectrogram.length;
  drawImage(ctx, 0, 0, canvas.width, canvas.height, frames, view.shown_bins, (c, r) => view.spectrogram[c][r]);
  ctx.fillStyle = '#fff';
  ctx.fillText(`0 to ~1.6 kHz, ${view.seconds} s`, 6, 14);
}

function drawPick(pick) {
  const canvas = $('activations');
  const ctx = clear(canvas);
  const rows = song.activations.length;
  const frames = song.activations[0].length;
  const band = canvas.height / rows;
  const left = 60;
  const xOf = (t) => left + ((canvas.width - left - 6) * t) / Math.max(1, frames - 1);
  const top = Math.max(pick.delta, ...song.activations.flat(), 1e-9) * 1.05;

  for (let q = 0; q < rows; q++) {
    const y0 = (rows - 1 - q) * band;
    const yOf = (v) => y0 + band - 4 - (band - 10) * (v / top);
    ctx.strokeStyle = '#eee';
    ctx.strokeRect(left, y0 + 2, canvas.width - left - 6, band - 4);
    ctx.fillStyle = '#222';
    ctx.fillText(`MIDI ${song.pitches[q]}`, 4, y0 + band / 2 + 4);

    ctx.strokeStyle = '#2a9d3a';
    for (const e of song.reference.filter((e) => e.pitch === song.pitches[q])) {
      const x = xOf(e.onset / song.hop_seconds);
      ctx.beginPath();
      ctx.moveTo(x, y0 + 3);
      ctx.lineTo(x, y0 + band - 3);
      ctx.stroke();
    }

    const line = (values, color, dash) => {
      ctx.strokeStyle = color;
      ctx.setLineDash(dash);
      ctx.beginPath();
      values.forEach((v, t) => (t ? ctx.lineTo(xOf(t), yOf(v)) : ctx.moveTo(xOf(t), yOf(v))));
      ctx.stroke();
      ctx.setLineDash([]);
    };
    line(pick.means[q].map((m) => m + pick.delta), '#e08a00', [4, 3]);
    line(song.activations[q], '#1f5fbf', []);

    ctx.fillStyle = '#c0282d';
    for (const t of pick.onsets[q]) {
      const x = xOf(t);
      const y = yOf(song.activations[q][t]);
      ctx.beginPath();
      ctx.moveTo(x, y - 7);
      ctx.lineTo(x - 4, y - 14);
      ctx.lineTo(x + 4, y - 14);
      ctx.fill();
    }
  }

  const s = pick.scores;
  const pct = (v) => `${(100 * v).toFixed(1)}%`;
  const cells = [pct(s.precision), pct(s.recall), pct(s.f_measure), pct(s.accuracy), s.tp, s.fp, s.fn];
  $('score-row').innerHTML = cells.map((c) => `<td>${c}</td>`).join('');
}

function repick() {
  const delta = Number($('delta').value);
  $('delta-value').textContent = delta.toFixed(2);
  if (!song) return;
  try {
    drawPick(JSON.parse(demo.pick(delta)));
  } catch (e) {
    status(e.message ?? String(e), true);
  }
}

$('train').onclick = () =>
  busy('Training...', () => {
    const view = JSON.parse(demo.train(Number($('lo').value), Number($('hi').value), Number($('iters').value)));
    drawTemplates(view);
    song = undefined;
    $('transcribe').disabled = false;
    $('delta').disabled = true;
    clear($('spectrogram'));
    clear($('activations'));
  });

$('transcribe').onclick = () =>
  busy('Transcribing...', () => {
    song = JSON.parse(demo.transcribe(Number($('seed').value), Number($('notes').value), Number($('seconds').value)));
    drawSpectrogram(song);
    $('delta').disabled = false;
    repick();
  });

$('delta').oninput = repick;

await init();
demo = new Demo();
$('train').disabled = false;
status('Ready. Train some templates to begin.');
