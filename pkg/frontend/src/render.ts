/**
 * Message rendering: markdown -> sanitized DOM, then math typesetting,
 * citation chips and copy buttons for fenced code.
 *
 * Order matters for safety. The markdown HTML is sanitized against a tag
 * whitelist first; KaTeX output and citation chips are generated afterwards
 * from text content only, so nothing the model writes can smuggle markup
 * past the sanitizer. Math inside code or pre elements is left verbatim.
 */

import DOMPurify from "dompurify";
import katex from "katex";
import { marked } from "marked";

import type { CitationInfo } from "./api";

const ALLOWED_TAGS = [
  "p", "br", "hr", "strong", "em", "del", "code", "pre", "blockquote",
  "ul", "ol", "li", "h1", "h2", "h3", "h4", "h5", "h6", "a",
  "table", "thead", "tbody", "tr", "th", "td", "span", "div",
];
const ALLOWED_ATTR = ["href", "title", "class", "start"];

const CITATION_RE = /\[source:\s*([^[\]|]+?)\s*\|\s*unit\s+(\d+)\s*\]/;
const DISPLAY_MATH_RE = /\$\$([^$]+?)\$\$/;
// Inline math must hug its delimiters so "$5 and $10" stays plain text.
const INLINE_MATH_RE = /\$(\S(?:[^$\n]*?\S)?)\$/;

const SEGMENT_RE = new RegExp(
  `${DISPLAY_MATH_RE.source}|${INLINE_MATH_RE.source}|${CITATION_RE.source}`,
  "g",
);

export function copyToClipboard(text: string): Promise<boolean> {
  if (typeof navigator === "undefined" || !navigator.clipboard?.writeText) {
    return Promise.resolve(false);
  }
  return navigator.clipboard.writeText(text).then(
    () => true,
    () => false,
  );
}

function mathSpan(expression: string, displayMode: boolean): HTMLElement {
  const span = document.createElement("span");
  span.className = displayMode ? "math math-display" : "math math-inline";
  span.innerHTML = katex.renderToString(expression, {
    throwOnError: false,
    displayMode,
  });
  return span;
}

export function citationChip(sourcePath: string, unitNumber: number): HTMLElement {
  const chip = document.createElement("button");
  chip.type = "button";
  chip.className = "citation-chip";
  chip.dataset.path = sourcePath;
  chip.dataset.unit = String(unitNumber);
  chip.textContent = `${sourcePath} · unit ${unitNumber}`;
  chip.title = "Copy source path";
  chip.addEventListener("click", () => {
    void copyToClipboard(sourcePath);
  });
  return chip;
}

function transformedSegments(text: string): (string | Node)[] {
  const out: (string | Node)[] = [];
  let last = 0;
  SEGMENT_RE.lastIndex = 0;
  for (const match of text.matchAll(SEGMENT_RE)) {
    const index = match.index ?? 0;
    if (index > last) out.push(text.slice(last, index));
    const [, display, inline, citePath, citeUnit] = match;
    if (display !== undefined) {
      out.push(mathSpan(display, true));
    } else if (inline !== undefined) {
      out.push(mathSpan(inline, false));
    } else {
      out.push(citationChip(citePath as string, Number(citeUnit)));
    }
    last = index + match[0].length;
  }
  if (last < text.length) out.push(text.slice(last));
  return out;
}

function insideVerbatim(node: Node): boolean {
  for (let cur = node.parentElement; cur; cur = cur.parentElement) {
    const tag = cur.tagName;
    if (tag === "CODE" || tag === "PRE") return true;
    if (cur.classList.contains("math")) return true;
  }
  return false;
}

/** Typeset $...$ / $$...$$ and turn citation markers into chips, in text
 * nodes only, skipping code and already-typeset math. */
function transformTextNodes(container: HTMLElement): void {
  const walker = document.createTreeWalker(container, NodeFilter.SHOW_TEXT);
  const targets: Text[] = [];
  for (let node = walker.nextNode(); node; node = walker.nextNode()) {
    if (!insideVerbatim(node)) targets.push(node as Text);
  }
  for (const node of targets) {
    const segments = transformedSegments(node.data);
    if (segments.length === 1 && typeof segments[0] === "string") continue;
    const fragment = document.createDocumentFragment();
    for (const segment of segments) {
      fragment.append(segment);
    }
    node.replaceWith(fragment);
  }
}

/** Exact fenced-code bodies in document order, from the markdown source. */
function collectCodeTexts(source: string): string[] {
  const texts: string[] = [];
  try {
    marked.walkTokens(marked.lexer(source), (token) => {
      if (token.type === "code") texts.push((token as { text: string }).text);
    });
  } catch {
    // fall through: copy buttons will use the DOM text instead
  }
  return texts;
}

function addCopyButtons(container: HTMLElement, codeTexts: string[]): void {
  const pres = Array.from(container.querySelectorAll("pre"));
  const paired = pres.length === codeTexts.length;
  pres.forEach((pre, i) => {
    const code = pre.querySelector("code");
    const exact = paired
      ? (codeTexts[i] as string)
      : (code?.textContent ?? "").replace(/\n$/, "");
    const wrapper = document.createElement("div");
    wrapper.className = "code-block";
    pre.replaceWith(wrapper);

    const button = document.createElement("button");
    button.type = "button";
    button.className = "copy-button";
    button.textContent = "Copy";
    button.addEventListener("click", () => {
      void copyToClipboard(exact).then((ok) => {
        button.textContent = ok ? "Copied!" : "Failed";
        setTimeout(() => {
          button.textContent = "Copy";
        }, 2000);
      });
    });

    wrapper.append(button, pre);
  });
}

/**
 * Render one assistant reply. Markdown is parsed and sanitized; if parsing
 * fails outright the raw text is shown escaped, never injected.
 */
export function renderMessage(source: string): HTMLElement {
  const container = document.createElement("div");
  container.className = "message-body";
  let html: string;
  try {
    html = marked.parse(source, { async: false, gfm: true }) as string;
  } catch {
    container.textContent = source;
    return container;
  }
  container.innerHTML = DOMPurify.sanitize(html, {
    ALLOWED_TAGS,
    ALLOWED_ATTR,
  });
  for (const anchor of container.querySelectorAll("a")) {
    anchor.setAttribute("target", "_blank");
    anchor.setAttribute("rel", "noopener noreferrer");
  }
  transformTextNodes(container);
  addCopyButtons(container, collectCodeTexts(source));
  return container;
}

/** Chips row for the turn's validated citations, deduplicated. */
export function citationRow(citations: CitationInfo[]): HTMLElement | null {
  if (!citations.length) return null;
  const row = document.createElement("div");
  row.className = "citation-row";
  const seen = new Set<string>();
  for (const citation of citations) {
    const key = `${citation.source_path}|${citation.unit_number}`;
    if (seen.has(key)) continue;
    seen.add(key);
    row.append(citationChip(citation.source_path, citation.unit_number));
  }
  return row;
}
