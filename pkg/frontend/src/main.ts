// DOM wiring for the steering console. All session behavior lives in
// ConsoleCore; this file only binds controls, the WebSocket, and the charts.

import { ConsoleCore, Transport, clampRate } from "./core.js";
import { drawHistogramPairs, drawRateChart } from "./charts.js";
import { SessionConfig, serialize } from "./protocol.js";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function queryConfig(): { server: string; config: SessionConfig; tps: number } {
  const params = new URLSearchParams(location.search);
  const server =
    params.get("server") ??
    `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/session`;
  const config: SessionConfig = {
    seed: Number(params.get("seed") ?? 0),
    sps: clampRate(Number(params.get("sps") ?? 4)),
    clock: (params.get("clock") as "wall" | "simulated") ?? "wall",
    src: true,
  };
  return { server, config, tps: Number(params.get("tps") ?? 8) };
}

function makeTransport(
  url: string,
  onMessage: (raw: string) => void,
  onStatus: (s: string) => void,
): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const ws = new WebSocket(url);
    ws.onopen = () => {
      onStatus("connected");
      resolve({
        send: (msg) => ws.send(serialize(msg)),
        close: () => ws.close(),
      });
    };
    ws.onmessage = (ev) => onMessage(String(ev.data));
    ws.onclose = () => onStatus("disconnected");
    ws.onerror = () => {
      onStatus("error");
      reject(new Error(`cannot reach ${url}`));
    };
  });
}

async function boot(): Promise<void> {
  const { server, config, tps } = queryConfig();
  const banner = $("status");
  const rateChart = $("rate-chart") as HTMLCanvasElement;
  const histChart = $("hist-chart") as HTMLCanvasElement;
  const slider = $("rate-slider") as HTMLInputElement;
  const sliderValue = $("rate-value");
  const textBox = $("text-input") as HTMLTextAreaElement;
  const tick = $("tick-toggle") as HTMLInputElement;

  let core: ConsoleCore | null = null;
  let dirty = true;
  let audio: AudioContext | null = null;

  const setStatus = (s: string) => {
    banner.textContent = s;
    banner.dataset.state = s;
  };

  const beep = () => {
    if (!tick.checked) return;
    audio = audio ?? new AudioContext();
    const osc = audio.createOscillator();
    const gain = audio.createGain();
    gain.gain.value = 0.03;
    osc.frequency.value = 880;
    osc.connect(gain).connect(audio.destination);
    osc.start();
    osc.stop(audio.currentTime + 0.02);
  };

  async function connect(): Promise<void> {
    setStatus("connecting");
    try {
      const transport = await makeTransport(
        server,
        (raw) => {
          if (core) {
            const before = core.state.frames;
            core.onMessage(raw);
            if (core.state.frames > before) beep();
          }
        },
        setStatus,
      );
      if (core) {
        core.reset(transport);
      } else {
        core = new ConsoleCore(transport, { slider: config.sps ?? 4 });
        core.subscribe(() => {
          dirty = true;
        });
      }
      core.start(config);
      setStatus("streaming");
    } catch (err) {
      setStatus("error");
      banner.textContent = `connection failed: ${(err as Error).message} (retry below)`;
    }
  }

  $("connect-btn").addEventListener("click", () => void connect());
  $("stream-btn").addEventListener("click", () => {
    const words = textBox.value.trim().split(/\s+/).filter(Boolean);
    if (words.length && core) core.streamText(words, tps);
    textBox.value = "";
  });
  $("end-btn").addEventListener("click", () => core?.endText());
  $("download-btn").addEventListener("click", () => {
    if (!core) return;
    const blob = new Blob([JSON.stringify(core.transcript, null, 1)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session-transcript.json";
    a.click();
  });
  slider.addEventListener("input", () => {
    const v = Number(slider.value);
    sliderValue.textContent = v.toFixed(1);
    core?.setSlider(v);
  });

  function render(): void {
    requestAnimationFrame(render);
    if (!core || !dirty) return;
    dirty = false;
    const s = core.state;
    drawRateChart(
      rateChart.getContext("2d")!,
      rateChart.width,
      rateChart.height,
      s.target,
      s.achieved,
      s.sessionTime,
    );
    drawHistogramPairs(
      histChart.getContext("2d")!,
      histChart.width,
      histChart.height,
      s.pAcc,
      s.pTarget,
    );
    $("frames").textContent = String(s.frames);
    $("fpl").textContent = s.fplMs === null ? "–" : `${s.fplMs.toFixed(0)} ms`;
    $("rtf").textContent = s.rtfSoFar === null ? "–" : s.rtfSoFar.toFixed(3);
    $("words").textContent = `${s.wordsSent} sent / ${s.wordsPending} pending`;
    $("errors").textContent = s.lastError ?? "";
    if (s.status === "done" && s.doneTotals) {
      $("summary").textContent = `done: ${JSON.stringify(s.doneTotals)}`;
    }
  }

  render();
  await connect();
}

boot().catch((err) => {
  const banner = document.getElementById("status");
  if (banner) banner.textContent = `boot failed: ${err}`;
});
