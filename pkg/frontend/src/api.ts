import type {
  Garment,
  GarmentsPage,
  Health,
  RetrieveRequest,
  RetrieveResponse,
  TemplateInventory,
} from './types.js';

/** Error body the service sends: {"error": message, "field": offending field or null}. */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly field: string | null,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function unwrap<T>(res: Response): Promise<T> {
  if (res.ok) {
    return res.json() as Promise<T>;
  }
  let message = `request failed with status ${res.status}`;
  let field: string | null = null;
  try {
    const body = await res.json();
    if (typeof body.error === 'string') message = body.error;
    if (typeof body.field === 'string') field = body.field;
  } catch {
    // non-JSON error body; keep the status message
  }
  throw new ApiError(message, res.status, field);
}

export interface GarmentQuery {
  split?: string;
  category?: string;
  page?: number;
  page_size?: number;
}

/**
 * Thin typed client over the workbench API. The UI never computes scores
 * itself; every ranking on screen is one retrieve() response.
 */
export class ApiClient {
  constructor(readonly baseUrl: string = '') {}

  health(): Promise<Health> {
    return this.get('/api/health');
  }

  garments(query: GarmentQuery = {}): Promise<GarmentsPage> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(query)) {
      if (value !== undefined) params.set(key, String(value));
    }
    const qs = params.toString();
    return this.get(`/api/garments${qs ? `?${qs}` : ''}`);
  }

  garment(id: string): Promise<Garment> {
    return this.get(`/api/garments/${encodeURIComponent(id)}`);
  }

  templates(): Promise<TemplateInventory> {
    return this.get('/api/templates');
  }

  async retrieve(request: RetrieveRequest): Promise<RetrieveResponse> {
    const res = await fetch(`${this.baseUrl}/api/retrieve`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(request),
    });
    return unwrap(res);
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`);
    return unwrap(res);
  }
}
