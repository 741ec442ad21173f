/**
 * Task-DAG rendering: layered layout, status-colored nodes, dependency
 * edges. Pure function of the descriptor's task list — the layout invents
 * no state of its own.
 */

import type { TaskSummary } from "./api.js";

const COLUMN_WIDTH = 150;
const ROW_HEIGHT = 64;
const NODE_WIDTH = 104;
const NODE_HEIGHT = 36;
const MARGIN = 24;

const STATUS_COLORS: Record<string, string> = {
  pending: "#8a93a6",
  ready: "#4f8cff",
  running: "#e8b64c",
  done: "#3fbf6f",
  failed: "#e05555",
};

interface NodePosition {
  x: number;
  y: number;
}

/** Longest-path depth per task; sources sit at depth 0. */
export function taskDepths(tasks: TaskSummary[]): Map<string, number> {
  const depths = new Map<string, number>(tasks.map((t) => [t.id, 0]));
  let changed = true;
  let guard = tasks.length + 1;
  while (changed && guard-- > 0) {
    changed = false;
    for (const task of tasks) {
      for (const dep of task.depends_on) {
        const candidate = (depths.get(dep) ?? 0) + 1;
        if (candidate > (depths.get(task.id) ?? 0)) {
          depths.set(task.id, candidate);
          changed = true;
        }
      }
    }
  }
  return depths;
}

function positions(tasks: TaskSummary[]): Map<string, NodePosition> {
  const depths = taskDepths(tasks);
  const columns = new Map<number, string[]>();
  for (const task of [...tasks].sort((a, b) => a.id.localeCompare(b.id))) {
    const depth = depths.get(task.id) ?? 0;
    const column = columns.get(depth) ?? [];
    column.push(task.id);
    columns.set(depth, column);
  }
  const result = new Map<string, NodePosition>();
  for (const [depth, ids] of columns) {
    ids.forEach((id, row) => {
      result.set(id, {
        x: MARGIN + depth * COLUMN_WIDTH,
        y: MARGIN + row * ROW_HEIGHT,
      });
    });
  }
  return result;
}

const SVG_NS = "http://www.w3.org/2000/svg";

export function renderDag(tasks: TaskSummary[]): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.classList.add("dag");
  const layout = positions(tasks);
  let width = 320;
  let height = 120;
  for (const pos of layout.values()) {
    width = Math.max(width, pos.x + NODE_WIDTH + MARGIN);
    height = Math.max(height, pos.y + NODE_HEIGHT + MARGIN);
  }
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));

  // edges underneath nodes
  for (const task of tasks) {
    const to = layout.get(task.id);
    if (!to) continue;
    for (const dep of task.depends_on) {
      const from = layout.get(dep);
      if (!from) continue;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(from.x + NODE_WIDTH));
      line.setAttribute("y1", String(from.y + NODE_HEIGHT / 2));
      line.setAttribute("x2", String(to.x));
      line.setAttribute("y2", String(to.y + NODE_HEIGHT / 2));
      line.setAttribute("stroke", "#5b667a");
      line.setAttribute("stroke-width", "1.5");
      line.dataset.edge = `${dep}->${task.id}`;
      svg.appendChild(line);
    }
  }

  for (const task of tasks) {
    const pos = layout.get(task.id);
    if (!pos) continue;
    const group = document.createElementNS(SVG_NS, "g");
    group.dataset.taskId = task.id;
    group.dataset.status = task.status;

    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(pos.x));
    rect.setAttribute("y", String(pos.y));
    rect.setAttribute("rx", "6");
    rect.setAttribute("width", String(NODE_WIDTH));
    rect.setAttribute("height", String(NODE_HEIGHT));
    rect.setAttribute("fill", STATUS_COLORS[task.status] ?? "#8a93a6");
    group.appendChild(rect);

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(pos.x + NODE_WIDTH / 2));
    label.setAttribute("y", String(pos.y + NODE_HEIGHT / 2 + 4));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("fill", "#0b1020");
    label.setAttribute("font-size", "13");
    label.textContent = task.id;
    group.appendChild(label);

    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = `${task.id} (${task.status}): ${task.description}`;
    group.appendChild(title);

    svg.appendChild(group);
  }
  return svg;
}
