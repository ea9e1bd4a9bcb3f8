/**
 * Client for an external caption-intervention service: posts each caption
 * and expects `{ "intervened_description": string }` back. Transient
 * failures are retried with exponential backoff (3 retries); malformed
 * responses surface as errors so callers can skip-and-count the row.
 */

export interface CaptionServiceConfig {
  endpoint: string;
  /** Base delay before the first retry; doubles each attempt. */
  initialDelayMs?: number;
  maxRetries?: number;
}

export class CaptionServiceError extends Error {
  constructor(
    message: string,
    readonly permanent = false,
  ) {
    super(message);
  }
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

async function requestOnce(endpoint: string, caption: string): Promise<string> {
  let response: Response;
  try {
    response = await fetch(endpoint, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ caption }),
    });
  } catch (err) {
    throw new CaptionServiceError(`request failed: ${String(err)}`);
  }
  if (response.status === 401 || response.status === 403 || response.status === 429) {
    throw new CaptionServiceError(`auth/quota error: HTTP ${response.status}`, true);
  }
  if (!response.ok) {
    throw new CaptionServiceError(`HTTP ${response.status}`);
  }
  let payload: unknown;
  try {
    payload = await response.json();
  } catch {
    throw new CaptionServiceError("malformed JSON response", true);
  }
  const text = (payload as Record<string, unknown>)?.["intervened_description"];
  if (typeof text !== "string" || text.length === 0) {
    throw new CaptionServiceError("response missing intervened_description", true);
  }
  return text;
}

export async function interveneCaption(
  config: CaptionServiceConfig,
  caption: string,
): Promise<string> {
  const maxRetries = config.maxRetries ?? 3;
  const initial = config.initialDelayMs ?? 250;
  let lastError: CaptionServiceError | null = null;
  for (let attempt = 0; attempt <= maxRetries; attempt++) {
    try {
      return await requestOnce(config.endpoint, caption);
    } catch (err) {
      lastError = err as CaptionServiceError;
      if (lastError.permanent || attempt === maxRetries) break;
      await sleep(initial * 2 ** attempt);
    }
  }
  throw lastError ?? new CaptionServiceError("unreachable");
}
