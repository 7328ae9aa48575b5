// Tiny DOM helpers; values go in as text nodes, never as markup.

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = []
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function banner(kind: "ok" | "error" | "info", text: string): HTMLElement {
  return el("div", { class: `banner banner-${kind}`, "data-banner": kind }, [text]);
}

export function labelled(labelText: string, input: HTMLElement): HTMLElement {
  return el("label", { class: "field" }, [
    el("span", {}, [labelText]),
    input,
  ]);
}
