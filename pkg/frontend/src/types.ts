/**
 * Wire types for the audit service JSON API.
 * Field names mirror docs/api-schema.md exactly; the console never invents
 * or recomputes any of these values.
 */

export type SessionStatus =
  | 'AwaitingBatch'
  | 'AwaitingCvr'
  | 'AwaitingBallot'
  | 'Stopped'

export interface IterationRecord {
  iter: number
  batch: number
  cvr_digest: string
  row: number
  identifier: string | null
  ballot_w: number | null
  ballot_l: number | null
  missing: boolean
  discrepancy: number
  log_risk: number
}

export interface SessionView {
  session_id: string
  status: SessionStatus
  mode: string
  transform: string
  alpha: number
  gamma: number
  ell_min: number
  ell_max: number
  seed: number
  mu: number
  mu_exact: [number, number]
  iterations: number
  log_risk: number
  risk: number
  current_batch: number | null
  current_row: number | null
  current_identifier: string | null
  verdict: 'Consistent' | 'Inconclusive' | null
  records: IterationRecord[]
}

export interface ApiFailure {
  error: string
  where: string | null
}

/** One of {Winner, Loser, Blank, Missing}; Missing maps server-side to a
 * vote for the declared loser. */
export type Interpretation = 'winner' | 'loser' | 'blank' | 'missing'
