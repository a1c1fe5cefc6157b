/** Polling helpers for driving the async UI from tests. */

export async function waitFor(
  check: () => boolean,
  label: string,
  timeoutMs = 10_000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) {
      return;
    }
    await new Promise((tick) => setTimeout(tick, 25));
  }
  throw new Error(`timed out waiting for ${label}`);
}

export function freshRoot(): HTMLElement {
  document.body.innerHTML = "";
  const root = document.createElement("main");
  root.id = "app";
  document.body.append(root);
  return root;
}
