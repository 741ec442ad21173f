/**
 * Console views: the dashboard (list + start form) and the workflow
 * detail page (phase banner, DAG, transcript, feedback panel).
 *
 * All rendered state derives from API responses; the only mutations are
 * the documented POST routes, issued through the ApiClient.
 */

import type { ApiClient, WorkflowDescriptor, WorkflowEvent } from "./api.js";
import { ApiError } from "./api.js";
import { renderDag } from "./dag.js";
import { EventStream } from "./events.js";

export interface ViewHandle {
  element: HTMLElement;
  refresh(): Promise<void>;
  stop(): void;
}

export type Navigate = (hash: string) => void;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

// ---------------------------------------------------------------------------
// dashboard
// ---------------------------------------------------------------------------

export async function mountDashboard(
  root: HTMLElement,
  client: ApiClient,
  navigate: Navigate,
): Promise<ViewHandle> {
  const container = el("div", "dashboard");
  const heading = el("h1", undefined, "Workflows");
  const form = el("form", "start-form");
  const select = el("select");
  select.name = "config";
  const instruction = el("input") as HTMLInputElement;
  instruction.name = "instruction";
  instruction.placeholder = "instruction (blank = config default)";
  const startButton = el("button", undefined, "Start");
  startButton.type = "submit";
  const formError = el("span", "inline-warning");
  formError.hidden = true;
  form.append(select, instruction, startButton, formError);

  const table = el("table", "workflow-list");
  const head = el("tr");
  for (const column of ["id", "config", "phase", "verdict", "tasks", ""]) {
    head.appendChild(el("th", undefined, column));
  }
  table.appendChild(head);

  container.append(heading, form, table);
  root.replaceChildren(container);

  const configs = await client.listConfigs();
  for (const config of configs) {
    const option = el("option", undefined, config.name) as HTMLOptionElement;
    option.value = config.name;
    select.appendChild(option);
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    formError.hidden = true;
    client
      .startWorkflow(select.value, instruction.value.trim() || undefined)
      .then(({ workflow_id }) => navigate(`#/wf/${workflow_id}`))
      .catch((error: unknown) => {
        formError.textContent = error instanceof ApiError ? error.detail : String(error);
        formError.hidden = false;
      });
  });

  async function refresh(): Promise<void> {
    const workflows = await client.listWorkflows();
    while (table.rows.length > 1) table.deleteRow(1);
    for (const workflow of workflows) {
      const row = table.insertRow();
      row.dataset.workflowId = workflow.workflow_id;
      row.insertCell().textContent = workflow.workflow_id;
      row.insertCell().textContent = workflow.config_name;
      const phase = row.insertCell();
      phase.textContent = workflow.phase;
      phase.className = `phase phase-${workflow.phase}`;
      row.insertCell().textContent =
        workflow.verdict === null ? "-" : String(workflow.verdict);
      row.insertCell().textContent = `${
        workflow.tasks.filter((t) => t.status === "done").length
      }/${workflow.tasks.length}`;
      const link = el("a", undefined, "open");
      link.setAttribute("href", `#/wf/${workflow.workflow_id}`);
      row.insertCell().appendChild(link);
    }
  }

  await refresh();
  const timer = setInterval(() => void refresh().catch(() => undefined), 2000);
  return {
    element: container,
    refresh,
    stop: () => clearInterval(timer),
  };
}

// ---------------------------------------------------------------------------
// workflow detail
// ---------------------------------------------------------------------------

function describeEvent(event: WorkflowEvent): string {
  const p = event.payload as Record<string, string | number | boolean>;
  switch (event.kind) {
    case "plan_created": {
      const tasks = event.payload.tasks as unknown[] | undefined;
      return `plan created with ${tasks?.length ?? 0} tasks`;
    }
    case "task_released":
      return `task ${p.task_id} released`;
    case "task_started":
      return `task ${p.task_id} started on unit ${p.unit}`;
    case "agent_selected":
      return `agent ${p.agent} takes iteration ${p.iteration} of task ${p.task_id}`;
    case "model_call":
      return `model call (${p.prompt_hash})`;
    case "tool_invoked":
      return `tool ${p.tool} invoked for task ${p.task_id}`;
    case "observation_added":
      return `observation [${p.source}]: ${p.content}`;
    case "task_completed":
      return `task ${p.task_id} completed: ${p.result}`;
    case "task_failed":
      return `task ${p.task_id} failed: ${p.reason}`;
    case "verdict_issued":
      return `verdict: ${p.verdict} (${p.reason})`;
    case "feedback_injected":
      return `feedback injected for task ${p.task_id}: ${p.content}`;
    case "human_requested":
      return `human input requested for task ${p.task_id}: ${p.prompt}`;
    case "human_responded":
      return `human responded: ${p.content}`;
    case "snapshot":
      return `snapshot ${p.sequence} written`;
    case "resumed":
      return "workflow resumed from snapshot";
    default:
      return event.kind;
  }
}

export async function mountWorkflowDetail(
  root: HTMLElement,
  client: ApiClient,
  workflowId: string,
  navigate: Navigate,
): Promise<ViewHandle> {
  const container = el("div", "detail");
  const back = el("a", "back", "← workflows");
  back.setAttribute("href", "#/");

  const banner = el("div", "phase-banner");
  const controls = el("div", "controls");
  const pauseButton = el("button", undefined, "Pause");
  const resumeButton = el("button", undefined, "Resume");
  const controlWarning = el("span", "inline-warning");
  controlWarning.hidden = true;
  controls.append(pauseButton, resumeButton, controlWarning);

  const dagContainer = el("div", "dag-container");

  const humanBox = el("div", "human-request");
  humanBox.hidden = true;

  const feedbackForm = el("form", "feedback-form");
  const feedbackTask = el("select");
  feedbackTask.name = "task";
  const feedbackText = el("input") as HTMLInputElement;
  feedbackText.name = "content";
  feedbackText.placeholder = "incidental feedback for the selected task";
  const feedbackSend = el("button", undefined, "Send feedback");
  feedbackSend.type = "submit";
  const feedbackWarning = el("span", "inline-warning");
  feedbackWarning.hidden = true;
  feedbackForm.append(feedbackTask, feedbackText, feedbackSend, feedbackWarning);

  const transcriptHeading = el("h2", undefined, "Transcript");
  const taskFilter = el("select", "task-filter");
  const allOption = el("option", undefined, "all tasks") as HTMLOptionElement;
  allOption.value = "";
  taskFilter.appendChild(allOption);
  const transcript = el("ol", "transcript");

  container.append(
    back,
    banner,
    controls,
    dagContainer,
    humanBox,
    feedbackForm,
    transcriptHeading,
    taskFilter,
    transcript,
  );
  root.replaceChildren(container);

  const knownTasks = new Set<string>();

  function applyFilter(): void {
    const wanted = taskFilter.value;
    for (const row of Array.from(transcript.children) as HTMLElement[]) {
      row.hidden = wanted !== "" && row.dataset.task !== wanted;
    }
  }
  taskFilter.addEventListener("change", applyFilter);

  function appendEvents(events: WorkflowEvent[]): void {
    for (const event of events) {
      const row = el("li", `event event-${event.kind}`);
      row.dataset.seq = String(event.sequence_no);
      const taskId = (event.payload as { task_id?: string }).task_id;
      if (taskId) row.dataset.task = taskId;
      row.append(
        el("span", "seq", String(event.sequence_no)),
        el("span", "kind", event.kind),
        el("span", "detail-text", describeEvent(event)),
      );
      transcript.appendChild(row);
    }
    applyFilter();
  }

  function renderDescriptor(descriptor: WorkflowDescriptor): void {
    banner.textContent =
      `${descriptor.config_name} · ${descriptor.workflow_id} — phase: ${descriptor.phase}` +
      (descriptor.verdict === null ? "" : ` · verdict: ${descriptor.verdict}`) +
      (descriptor.replan_count ? ` · replans: ${descriptor.replan_count}` : "");
    banner.className = `phase-banner phase-${descriptor.phase}`;

    dagContainer.replaceChildren(renderDag(descriptor.tasks));

    for (const task of descriptor.tasks) {
      if (!knownTasks.has(task.id)) {
        knownTasks.add(task.id);
        const option = el("option", undefined, task.id) as HTMLOptionElement;
        option.value = task.id;
        taskFilter.appendChild(option);
        const feedbackOption = option.cloneNode(true) as HTMLOptionElement;
        feedbackOption.textContent = task.id;
        feedbackTask.appendChild(feedbackOption);
      }
    }

    if (descriptor.outstanding_requests.length > 0) {
      const request = descriptor.outstanding_requests[0];
      humanBox.replaceChildren(
        el("strong", undefined, `Human input requested (task ${request.task_id}):`),
        el("p", "prompt", request.prompt),
      );
      const responseInput = el("input") as HTMLInputElement;
      responseInput.name = "human-response";
      responseInput.placeholder = "your answer";
      const respond = el("button", undefined, "Respond");
      respond.addEventListener("click", () => {
        client
          .sendFeedback(workflowId, "HumanProxyResponse", responseInput.value, request.task_id)
          .then(() => refresh())
          .catch(() => undefined);
      });
      humanBox.append(responseInput, respond);
      humanBox.hidden = false;
    } else {
      humanBox.hidden = true;
      humanBox.replaceChildren();
    }
  }

  async function refresh(): Promise<void> {
    renderDescriptor(await client.getWorkflow(workflowId));
  }

  pauseButton.addEventListener("click", () => {
    controlWarning.hidden = true;
    client
      .pause(workflowId)
      .then(() => refresh())
      .catch((error: unknown) => {
        controlWarning.textContent = error instanceof ApiError ? error.detail : String(error);
        controlWarning.hidden = false;
      });
  });
  resumeButton.addEventListener("click", () => {
    controlWarning.hidden = true;
    client
      .resume(workflowId)
      .then(() => refresh())
      .catch((error: unknown) => {
        controlWarning.textContent = error instanceof ApiError ? error.detail : String(error);
        controlWarning.hidden = false;
      });
  });

  feedbackForm.addEventListener("submit", (event) => {
    event.preventDefault();
    feedbackWarning.hidden = true;
    client
      .sendFeedback(
        workflowId,
        "IncidentalObservation",
        feedbackText.value,
        feedbackTask.value || undefined,
      )
      .then(() => {
        feedbackText.value = "";
      })
      .catch((error: unknown) => {
        feedbackWarning.textContent =
          error instanceof ApiError ? error.detail : String(error);
        feedbackWarning.hidden = false;
      });
  });

  // backfill the transcript from sequence 0, then follow the live stream
  const initial = await client.getEvents(workflowId, 0);
  appendEvents(initial);
  const stream = new EventStream(
    client,
    workflowId,
    (events) => {
      appendEvents(events);
      void refresh().catch(() => undefined);
    },
    initial.length > 0 ? initial[initial.length - 1].sequence_no + 1 : 0,
  );
  stream.start();
  await refresh();
  void navigate; // router owns navigation; detail view only links back

  return {
    element: container,
    refresh,
    stop: () => stream.stop(),
  };
}
