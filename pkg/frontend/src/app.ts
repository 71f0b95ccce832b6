/**
 * Screen wiring: consent gate -> chat. One in-flight request per tab; the
 * send control is disabled while a reply is pending or the input is empty.
 * A stored token restores the transcript from the history endpoint on load,
 * and any 401 drops the client back to the consent screen.
 */

import { ApiError } from "./api";
import type { ChatResult, CitationInfo, TurnRecord, TutorClient } from "./api";
import { citationRow, renderMessage } from "./render";
import {
  canStart,
  clearToken,
  initialGate,
  loadToken,
  saveToken,
  setConsent,
} from "./session";

export interface AppDeps {
  api: TutorClient;
  storage: Storage;
}

const CONSENT_STATEMENT =
  "Use of this assistant is voluntary and anonymous. Conversations are " +
  "stored without any identifying data and may be analyzed in aggregate " +
  "to improve the course. I have read the participant information.";

const DEFAULT_NOTICE =
  "Do not disclose any information which could identify an individual";

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

export function showConsent(root: HTMLElement, deps: AppDeps, error?: string): void {
  let gate = initialGate();
  root.replaceChildren();

  const screen = el("div", "consent-screen");
  screen.append(el("h1", "app-title", "Course Tutor"));
  screen.append(el("p", "consent-text", CONSENT_STATEMENT));
  screen.append(el("p", "privacy-notice", DEFAULT_NOTICE));

  const errorBanner = el("p", "error-banner", error ?? "");
  errorBanner.hidden = !error;
  screen.append(errorBanner);

  const label = el("label", "consent-label");
  const checkbox = el("input");
  checkbox.type = "checkbox";
  checkbox.id = "consent-box";
  label.append(checkbox, document.createTextNode(" I agree and want to start"));
  screen.append(label);

  const start = el("button", "start-button", "Start anonymous session");
  start.id = "start-button";
  start.disabled = true;
  screen.append(start);

  checkbox.addEventListener("change", () => {
    gate = setConsent(gate, checkbox.checked);
    start.disabled = !canStart(gate);
  });

  start.addEventListener("click", () => {
    if (!canStart(gate)) return;
    start.disabled = true;
    deps.api
      .createSession(true)
      .then((session) => {
        saveToken(session.token, deps.storage);
        showChat(root, deps, session.token, session.privacy_notice);
      })
      .catch((err: unknown) => {
        errorBanner.textContent =
          err instanceof ApiError ? `Could not start a session: ${err.message}` : "Network error; please try again.";
        errorBanner.hidden = false;
        start.disabled = !canStart(gate);
      });
  });

  root.append(screen);
}

function appendStudent(transcript: HTMLElement, text: string): HTMLElement {
  const bubble = el("div", "msg student");
  bubble.append(el("div", "message-body", text));
  transcript.append(bubble);
  return bubble;
}

function appendAssistant(
  transcript: HTMLElement,
  reply: string,
  citations: CitationInfo[],
  degraded: boolean,
): void {
  const bubble = el("div", "msg assistant");
  bubble.append(renderMessage(reply));
  const row = citationRow(citations);
  if (row) bubble.append(row);
  if (degraded) {
    bubble.append(el("div", "degraded-note", "partial search results were used"));
  }
  transcript.append(bubble);
}

export function showChat(
  root: HTMLElement,
  deps: AppDeps,
  token: string,
  notice?: string,
  turns: TurnRecord[] = [],
): void {
  root.replaceChildren();
  const screen = el("div", "chat-screen");

  const header = el("header", "chat-header");
  header.append(el("h1", "app-title", "Course Tutor"));
  header.append(el("p", "privacy-notice", notice || DEFAULT_NOTICE));
  screen.append(header);

  const transcript = el("div", "transcript");
  transcript.id = "transcript";
  for (const turn of turns) {
    appendStudent(transcript, turn.query);
    appendAssistant(transcript, turn.reply, turn.citations, turn.degraded);
  }
  screen.append(transcript);

  const retryBanner = el("div", "retry-banner");
  retryBanner.hidden = true;
  screen.append(retryBanner);

  const form = el("form", "chat-form");
  const input = el("input", "chat-input");
  input.id = "chat-input";
  input.type = "text";
  input.placeholder = "Ask about the course materials";
  input.autocomplete = "off";
  const send = el("button", "send-button", "Send");
  send.id = "send-button";
  send.type = "submit";
  send.disabled = true;
  form.append(input, send);
  screen.append(form);

  let inFlight = false;

  const syncSend = () => {
    send.disabled = inFlight || input.value.trim() === "";
  };
  input.addEventListener("input", syncSend);

  const submit = () => {
    const text = input.value.trim();
    if (!text || inFlight) return;
    inFlight = true;
    syncSend();
    retryBanner.hidden = true;
    retryBanner.replaceChildren();
    const optimistic = appendStudent(transcript, text);
    deps.api
      .sendMessage(token, text)
      .then((result: ChatResult) => {
        appendAssistant(transcript, result.reply, result.citations, result.degraded);
        input.value = "";
        transcript.scrollTop = transcript.scrollHeight;
      })
      .catch((err: unknown) => {
        optimistic.remove(); // the message stays in the input, not the log
        if (err instanceof ApiError && err.status === 401) {
          clearToken(deps.storage);
          showConsent(root, deps, "Your session has expired; please start again.");
          return;
        }
        const note = el("span", "", "Message not sent. ");
        const retry = el("button", "retry-button", "Retry");
        retry.type = "button";
        retry.addEventListener("click", submit);
        retryBanner.replaceChildren(note, retry);
        retryBanner.hidden = false;
      })
      .then(() => {
        inFlight = false;
        syncSend();
      });
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    submit();
  });

  root.append(screen);
}

/** Entry point: restore a stored session or show the consent gate. */
export async function initApp(root: HTMLElement, deps: AppDeps): Promise<void> {
  const token = loadToken(deps.storage);
  if (token === null) {
    showConsent(root, deps);
    return;
  }
  try {
    const turns = await deps.api.history(token);
    showChat(root, deps, token, undefined, turns);
  } catch (err) {
    if (err instanceof ApiError && err.status === 401) {
      clearToken(deps.storage);
      showConsent(root, deps, "Your session has expired; please start again.");
    } else {
      showChat(root, deps, token); // offline start; history fills on retry
    }
  }
}
