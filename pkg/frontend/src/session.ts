import type { RetrieveResponse, SessionExport, SessionTurn } from './types.js';

/**
 * Client-side session state: the current reference, the ordered turn
 * history, and the id of the one retrieve allowed in flight.
 *
 * Turn ids are handed out by beginTurn and only the newest id may complete;
 * a response arriving for any older id is discarded, so a slow answer can
 * never overwrite a newer one.
 */
export class SessionStore {
  turns: SessionTurn[] = [];
  referenceId: string | null = null;
  private nextTurnId = 1;
  private inFlightId: number | null = null;

  get inFlight(): boolean {
    return this.inFlightId !== null;
  }

  setReference(id: string): void {
    this.referenceId = id;
  }

  beginTurn(): number {
    const id = this.nextTurnId++;
    this.inFlightId = id;
    return id;
  }

  /** Returns the recorded turn, or null when the response is stale. */
  completeTurn(
    id: number,
    referenceId: string,
    feedback: string,
    response: RetrieveResponse,
    at: string = new Date().toISOString(),
  ): SessionTurn | null {
    if (id !== this.inFlightId) return null;
    this.inFlightId = null;
    const turn: SessionTurn = {
      turn: id,
      reference_id: referenceId,
      feedback,
      branch: response.branch,
      branch_logits: response.branch_logits,
      results: response.results,
      at,
    };
    this.turns.push(turn);
    return turn;
  }

  /** Returns true when the failure belongs to the current in-flight turn. */
  failTurn(id: number): boolean {
    if (id !== this.inFlightId) return false;
    this.inFlightId = null;
    return true;
  }

  /** Restores a past turn as the current view; its reference becomes current. */
  restore(index: number): SessionTurn {
    const turn = this.turns[index];
    if (turn === undefined) {
      throw new Error(`no turn at index ${index}`);
    }
    this.referenceId = turn.reference_id;
    return turn;
  }

  exportJson(): string {
    const payload: SessionExport = { version: 1, turns: this.turns };
    return JSON.stringify(payload, null, 2);
  }

  static importJson(text: string): SessionStore {
    let raw: unknown;
    try {
      raw = JSON.parse(text);
    } catch {
      throw new Error('session file is not valid JSON');
    }
    if (typeof raw !== 'object' || raw === null) {
      throw new Error('session file must be a JSON object');
    }
    const data = raw as Partial<SessionExport>;
    if (data.version !== 1) {
      throw new Error('session file version must be 1');
    }
    if (!Array.isArray(data.turns)) {
      throw new Error("session file field 'turns' must be an array");
    }
    const store = new SessionStore();
    for (const turn of data.turns) {
      for (const field of ['turn', 'reference_id', 'feedback', 'branch', 'branch_logits', 'results', 'at']) {
        if (!(field in turn)) {
          throw new Error(`session turn is missing field '${field}'`);
        }
      }
      store.turns.push(turn as SessionTurn);
    }
    const last = store.turns[store.turns.length - 1];
    if (last !== undefined) {
      store.referenceId = last.reference_id;
      store.nextTurnId = Math.max(...store.turns.map((t) => t.turn)) + 1;
    }
    return store;
  }
}
