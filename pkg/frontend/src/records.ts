// Flat key=value text records: the service's request/response body format.

export type Record_ = { [key: string]: string };

export function parseRecord(text: string): Record_ {
  const out: Record_ = {};
  for (const rawLine of text.split("\n")) {
    const line = rawLine.trim();
    if (!line || line.startsWith("#")) continue;
    const eq = line.indexOf("=");
    if (eq < 0) throw new Error(`bad record line: ${line}`);
    out[line.slice(0, eq).trim()] = line.slice(eq + 1).trim();
  }
  return out;
}

export function dumpRecord(fields: { [key: string]: string | number }): string {
  const lines: string[] = [];
  for (const [key, value] of Object.entries(fields)) {
    if (key.includes("=") || key.includes("\n")) throw new Error(`bad key: ${key}`);
    const text = String(value);
    if (text.includes("\n")) throw new Error(`value for ${key} contains newline`);
    lines.push(`${key}=${text}`);
  }
  return lines.join("\n") + "\n";
}
