/**
 * Console session model: a pure fold over the stream of server responses.
 *
 * The console performs zero randomness and zero statistics.  Every number
 * in the model (risk, thresholds, draw counts) is lifted verbatim from a
 * SessionView; the risk history is exactly the log_risk column of the
 * server's records.  Reducers never guess at transitions — an error
 * response leaves the audit state untouched and is rendered for retry.
 */

import type { ApiFailure, SessionView } from './types'

export type Step =
  | { kind: 'setup' }
  | { kind: 'batch'; batch: number }
  | { kind: 'upload'; batch: number }
  | { kind: 'ballot'; batch: number; row: number; identifier: string }
  | { kind: 'done'; verdict: 'Consistent' | 'Inconclusive' }

export interface RiskPoint {
  iter: number
  logRisk: number
  discrepancy: number
}

export interface ConsoleModel {
  view: SessionView | null
  step: Step
  /** log_risk after each completed iteration, straight off the server. */
  riskHistory: RiskPoint[]
  /** last server/transport error, shown verbatim with a retry affordance */
  error: string | null
  busy: boolean
  /** notice for the previous action (e.g. a recorded discrepancy of 2) */
  notice: string | null
}

export const initialModel: ConsoleModel = {
  view: null,
  step: { kind: 'setup' },
  riskHistory: [],
  error: null,
  busy: false,
  notice: null,
}

export type Event =
  | { type: 'request_started' }
  | { type: 'server_view'; view: SessionView }
  | { type: 'server_error'; failure: ApiFailure; httpStatus: number }
  | { type: 'transport_error'; message: string }

function stepOf(view: SessionView): Step {
  switch (view.status) {
    case 'AwaitingBatch':
      return { kind: 'batch', batch: -1 }
    case 'AwaitingCvr':
      return { kind: 'upload', batch: view.current_batch ?? -1 }
    case 'AwaitingBallot':
      return {
        kind: 'ballot',
        batch: view.current_batch ?? -1,
        row: view.current_row ?? -1,
        identifier: view.current_identifier ?? '',
      }
    case 'Stopped':
      return { kind: 'done', verdict: view.verdict ?? 'Inconclusive' }
  }
}

function historyOf(view: SessionView): RiskPoint[] {
  return view.records.map((r) => ({
    iter: r.iter,
    logRisk: r.log_risk,
    discrepancy: r.discrepancy,
  }))
}

function noticeOf(previous: SessionView | null, view: SessionView): string | null {
  if (previous && view.iterations > previous.iterations) {
    const last = view.records[view.records.length - 1]
    if (last && last.discrepancy === 2 && last.identifier === null) {
      return `CVR for batch ${last.batch} failed the consistency check: discrepancy 2 recorded`
    }
    if (last && last.missing) {
      return `ballot missing: scored as a vote for the loser (discrepancy ${last.discrepancy})`
    }
    return `discrepancy ${last?.discrepancy} recorded`
  }
  return null
}

export function reduce(model: ConsoleModel, event: Event): ConsoleModel {
  switch (event.type) {
    case 'request_started':
      return { ...model, busy: true, error: null }
    case 'server_view': {
      const view = event.view
      return {
        view,
        step: stepOf(view),
        riskHistory: historyOf(view),
        error: null,
        busy: false,
        notice: noticeOf(model.view, view),
      }
    }
    case 'server_error': {
      const where = event.failure.where ? ` (${event.failure.where})` : ''
      return {
        ...model,
        busy: false,
        error: `${event.httpStatus}: ${event.failure.error}${where}`,
      }
    }
    case 'transport_error':
      return { ...model, busy: false, error: event.message }
  }
}

/** Fold an entire response stream; the model is a pure function of it. */
export function replay(events: Event[]): ConsoleModel {
  return events.reduce(reduce, initialModel)
}
