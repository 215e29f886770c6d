/**
 * Wires the pieces into a live control surface: 3D toolpath view, jog pad,
 * console, stream controls, and the calibration wizard, all speaking the
 * control service's socket channel. With no DOM (plain node) it runs a
 * minimal status loop instead, which keeps every layer exercisable headless.
 */

import { ServiceClient } from "./client.js";
import {
  BoundsToggle,
  ConsolePanel,
  JOG_STEPS,
  JogPad,
  ProgramLoader,
  StreamControls,
  type SendFn,
} from "./controls.js";
import type { ClientMessage } from "./protocol.js";
import { ToolpathScene } from "./scene.js";
import { ViewModel } from "./viewmodel.js";
import { CalibrationWizard } from "./wizard.js";

export interface App {
  client: ServiceClient;
  vm: ViewModel;
  scene: ToolpathScene;
  jog: JogPad;
  consolePanel: ConsolePanel;
  controls: StreamControls;
  bounds: BoundsToggle;
  loader: ProgramLoader;
  wizard: CalibrationWizard;
}

export async function createApp(
  host: string,
  port: number,
  options: { confirmStop?: () => boolean; envelope?: { x: number; y: number; z: number } } = {},
): Promise<App> {
  const client = new ServiceClient();
  await client.connect(host, port);
  const vm = new ViewModel();
  const scene = new ToolpathScene(options.envelope ?? { x: 220, y: 220, z: 250 });

  client.onMessage((msg) => {
    vm.applyService(msg);
    if (msg.type === "program_loaded") {
      scene.update(vm);
    } else if (msg.type === "state_update") {
      scene.updatePrinthead(vm);
    }
  });

  const send: SendFn = (msg: ClientMessage) => {
    vm.noteSent(msg);
    client.send(msg);
  };

  return {
    client,
    vm,
    scene,
    jog: new JogPad(send),
    consolePanel: new ConsolePanel(send),
    controls: new StreamControls(send, options.confirmStop),
    bounds: new BoundsToggle(send),
    loader: new ProgramLoader(send),
    wizard: new CalibrationWizard(client, vm),
  };
}

function renderDom(app: App): void {
  const root = document.getElementById("app") ?? document.body;

  const status = document.createElement("pre");
  status.id = "status";
  root.appendChild(status);
  setInterval(() => {
    status.textContent = app.vm.progressText;
  }, 250);

  const pad = document.createElement("div");
  pad.id = "jog-pad";
  for (const step of JOG_STEPS) {
    const button = document.createElement("button");
    button.textContent = `${step} mm`;
    button.onclick = () => app.jog.selectStep(step);
    pad.appendChild(button);
  }
  for (const [label, axis, dir] of [
    ["x-", "x", -1], ["x+", "x", 1],
    ["y-", "y", -1], ["y+", "y", 1],
    ["z-", "z", -1], ["z+", "z", 1],
  ] as const) {
    const button = document.createElement("button");
    button.textContent = label;
    button.onclick = () => app.jog.press(axis, dir);
    pad.appendChild(button);
  }
  root.appendChild(pad);

  const consoleInput = document.createElement("input");
  consoleInput.id = "console";
  consoleInput.placeholder = "raw G-code; enter to send";
  consoleInput.onkeydown = (event) => {
    if (event.key === "Enter") {
      app.consolePanel.submit(consoleInput.value);
      consoleInput.value = "";
    }
  };
  root.appendChild(consoleInput);

  const transcript = document.createElement("pre");
  transcript.id = "transcript";
  root.appendChild(transcript);
  setInterval(() => {
    transcript.textContent = app.vm.transcript
      .slice(-40)
      .map((e) => `${e.kind}> ${e.text}`)
      .join("\n");
  }, 250);

  for (const [label, action] of [
    ["start", () => app.controls.start()],
    ["pause", () => app.controls.pause()],
    ["resume", () => app.controls.resume()],
    ["stop", () => app.controls.stop()],
  ] as const) {
    const button = document.createElement("button");
    button.textContent = label;
    button.onclick = action;
    root.appendChild(button);
  }
}

async function mainNode(): Promise<void> {
  const [host = "127.0.0.1", portText = "7878"] = process.argv.slice(2);
  const app = await createApp(host, Number(portText));
  console.log(`connected to ${host}:${portText}; streaming state updates`);
  app.client.onMessage((msg) => {
    if (msg.type === "state_update") console.log(app.vm.progressText);
    if (msg.type === "fault") console.error("fault:", msg.message);
  });
}

declare const window: unknown;

if (typeof window !== "undefined" && typeof document !== "undefined") {
  const params = new URLSearchParams(location.search);
  void createApp(
    params.get("host") ?? "127.0.0.1",
    Number(params.get("port") ?? "7878"),
    { confirmStop: () => confirm("Stop the print? Heaters off, nozzle lifted.") },
  ).then(renderDom);
} else if (import.meta.url === `file://${process.argv[1]}`) {
  void mainNode();
}
