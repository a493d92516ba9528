/**
 * Client-side CVR file checks: shape only.
 * The server owns every semantic rule (identifier namespace, contiguity,
 * vote ranges); rejecting obvious non-CSV here just saves a round trip.
 */

export interface CsvShapeResult {
  ok: boolean
  error?: string
}

export function checkCvrShape(text: string): CsvShapeResult {
  if (text.trim().length === 0) {
    return { ok: false, error: 'file is empty' }
  }
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0)
  if (lines[0].trim() !== 'row,identifier,w,l') {
    return { ok: false, error: 'first line must be the header "row,identifier,w,l"' }
  }
  for (let i = 1; i < lines.length; i++) {
    // naive comma count is fine for a shape check; quoted identifiers with
    // commas are rare and the server parses them properly either way
    if (!lines[i].includes(',')) {
      return { ok: false, error: `line ${i + 1} does not look like CSV` }
    }
  }
  return { ok: true }
}
