/**
 * Controller: wires operator intents to API calls and folds every server
 * response through the pure reducer.  The controller never advances the
 * step locally; only a fresh SessionView moves the state machine.
 */

import { ApiError, AuditApi } from './api'
import { checkCvrShape } from './csv'
import { initialModel, reduce, type ConsoleModel, type Event } from './state'
import type { Interpretation, SessionView } from './types'

export class ConsoleController {
  model: ConsoleModel = initialModel
  private listeners: Array<(model: ConsoleModel) => void> = []

  constructor(readonly api: AuditApi) {}

  subscribe(listener: (model: ConsoleModel) => void): void {
    this.listeners.push(listener)
  }

  private apply(event: Event): void {
    this.model = reduce(this.model, event)
    for (const listener of this.listeners) listener(this.model)
  }

  private async run(call: () => Promise<SessionView>): Promise<void> {
    this.apply({ type: 'request_started' })
    try {
      const view = await call()
      this.apply({ type: 'server_view', view })
    } catch (error) {
      if (error instanceof ApiError) {
        this.apply({
          type: 'server_error',
          failure: error.failure,
          httpStatus: error.httpStatus,
        })
      } else {
        this.apply({ type: 'transport_error', message: String(error) })
      }
    }
  }

  private sessionId(): string {
    const id = this.model.view?.session_id
    if (!id) throw new Error('no session yet')
    return id
  }

  create(manifest: string, tabulation: string, alpha: string, seed: string): Promise<void> {
    return this.run(() =>
      this.api.createSession(manifest, tabulation, {
        alpha: Number(alpha),
        seed: Number(seed),
      }),
    )
  }

  resume(sessionId: string): Promise<void> {
    return this.run(() => this.api.getSession(sessionId))
  }

  draw(): Promise<void> {
    return this.run(() => this.api.draw(this.sessionId()))
  }

  /** Client-side checks are shape-only; anything semantic is the server's call. */
  uploadCvr(csv: string): { shapeError?: string; done: Promise<void> | null } {
    const shape = checkCvrShape(csv)
    if (!shape.ok) {
      return { shapeError: shape.error, done: null }
    }
    const batch = this.model.step.kind === 'upload' ? this.model.step.batch : -1
    return { done: this.run(() => this.api.uploadCvr(this.sessionId(), batch, csv)) }
  }

  interpret(choice: Interpretation): Promise<void> {
    return this.run(() => this.api.interpret(this.sessionId(), choice))
  }
}
