/**
 * three.js scene construction: the work-envelope box, the toolpath (vertex
 * colors by feedrate for extrusions, dashed gray/violet for travels and
 * retracts), and the live printhead marker. Scene-graph only: attaching a
 * renderer is the embedder's job, so all of this runs headless.
 */

import * as THREE from "three";

import type { ViewModel } from "./viewmodel.js";

export interface Envelope {
  x: number;
  y: number;
  z: number;
}

export function buildEnvelopeBox(envelope: Envelope): THREE.LineSegments {
  const geometry = new THREE.BoxGeometry(envelope.x, envelope.y, envelope.z);
  geometry.translate(envelope.x / 2, envelope.y / 2, envelope.z / 2);
  const edges = new THREE.EdgesGeometry(geometry);
  const box = new THREE.LineSegments(
    edges,
    new THREE.LineBasicMaterial({ color: 0x444444 }),
  );
  box.name = "envelope";
  return box;
}

export function buildToolpath(vm: ViewModel): THREE.Group {
  const group = new THREE.Group();
  group.name = "toolpath";

  const extrudePositions: number[] = [];
  const extrudeColors: number[] = [];
  const transitPositions: number[] = [];
  const color = new THREE.Color();

  for (const seg of vm.segments) {
    const coords = [seg.start.x, seg.start.y, seg.start.z, seg.end.x, seg.end.y, seg.end.z];
    if (seg.kind === "extrude") {
      extrudePositions.push(...coords);
      color.set(seg.color);
      extrudeColors.push(color.r, color.g, color.b, color.r, color.g, color.b);
    } else {
      transitPositions.push(...coords);
    }
  }

  if (extrudePositions.length) {
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.Float32BufferAttribute(extrudePositions, 3));
    geometry.setAttribute("color", new THREE.Float32BufferAttribute(extrudeColors, 3));
    const lines = new THREE.LineSegments(
      geometry,
      new THREE.LineBasicMaterial({ vertexColors: true }),
    );
    lines.name = "toolpath-extrude";
    group.add(lines);
  }
  if (transitPositions.length) {
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.Float32BufferAttribute(transitPositions, 3));
    const lines = new THREE.LineSegments(
      geometry,
      new THREE.LineDashedMaterial({ color: 0x999999, dashSize: 2, gapSize: 1.5 }),
    );
    lines.computeLineDistances();
    lines.name = "toolpath-transit";
    group.add(lines);
  }
  return group;
}

export function buildPrintheadMarker(): THREE.Mesh {
  const marker = new THREE.Mesh(
    new THREE.SphereGeometry(2.0, 12, 12),
    new THREE.MeshBasicMaterial({ color: 0xffaa00 }),
  );
  marker.name = "printhead";
  marker.visible = false;
  return marker;
}

export class ToolpathScene {
  readonly scene = new THREE.Scene();
  private toolpath: THREE.Group | null = null;
  private readonly marker = buildPrintheadMarker();

  constructor(readonly envelope: Envelope) {
    this.scene.add(buildEnvelopeBox(envelope));
    this.scene.add(this.marker);
  }

  /** Re-sync drawn geometry with the view model. */
  update(vm: ViewModel): void {
    if (this.toolpath) {
      this.scene.remove(this.toolpath);
    }
    this.toolpath = buildToolpath(vm);
    this.scene.add(this.toolpath);
    this.updatePrinthead(vm);
  }

  /** Marker always reflects the latest reported position. */
  updatePrinthead(vm: ViewModel): void {
    if (vm.printhead) {
      this.marker.visible = true;
      this.marker.position.set(vm.printhead.x, vm.printhead.y, vm.printhead.z);
    } else {
      this.marker.visible = false;
    }
  }

  get drawnSegmentCount(): number {
    let vertices = 0;
    for (const child of this.toolpath?.children ?? []) {
      const geometry = (child as THREE.LineSegments).geometry;
      vertices += geometry.getAttribute("position").count;
    }
    return vertices / 2;
  }

  get lowestToolpathZ(): number {
    let min = Infinity;
    for (const child of this.toolpath?.children ?? []) {
      const positions = (child as THREE.LineSegments).geometry.getAttribute("position");
      for (let i = 0; i < positions.count; i++) {
        min = Math.min(min, positions.getZ(i));
      }
    }
    return min;
  }
}
