/**
 * Thin client for the audit service.  Every mutating call carries a
 * client-generated request id, so a retry after a dropped response replays
 * the server's stored answer instead of double-stepping the audit.
 */

import type { ApiFailure, Interpretation, SessionView } from './types'

export class ApiError extends Error {
  constructor(
    readonly httpStatus: number,
    readonly failure: ApiFailure,
  ) {
    super(failure.error)
  }
}

let requestCounter = 0

function freshRequestId(): string {
  requestCounter += 1
  return `${Date.now().toString(36)}-${requestCounter}-${Math.random().toString(36).slice(2, 8)}`
}

export class AuditApi {
  constructor(readonly base: string = '') {}

  private async send(
    method: string,
    path: string,
    body: BodyInit | null,
    requestId?: string,
  ): Promise<SessionView> {
    const headers: Record<string, string> = {}
    if (requestId) headers['X-Request-Id'] = requestId
    const response = await fetch(this.base + path, { method, body, headers })
    const payload = await response.json()
    if (!response.ok) {
      throw new ApiError(response.status, payload as ApiFailure)
    }
    return payload as SessionView
  }

  /** POST with one transparent retry through the same request id. */
  private async post(path: string, body: BodyInit | null): Promise<SessionView> {
    const requestId = freshRequestId()
    try {
      return await this.send('POST', path, body, requestId)
    } catch (error) {
      if (error instanceof ApiError) throw error // server spoke; don't retry
      return this.send('POST', path, body, requestId)
    }
  }

  createSession(manifest: string, tabulation: string, config: object): Promise<SessionView> {
    return this.post('/sessions', JSON.stringify({ manifest, tabulation, config }))
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.send('GET', `/sessions/${sessionId}`, null)
  }

  draw(sessionId: string): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/draw`, null)
  }

  uploadCvr(sessionId: string, batch: number, csv: string): Promise<SessionView> {
    return this.post(`/sessions/${sessionId}/cvr?batch=${batch}`, csv)
  }

  interpret(sessionId: string, choice: Interpretation): Promise<SessionView> {
    return this.post(
      `/sessions/${sessionId}/interpretation`,
      JSON.stringify({ interpretation: choice }),
    )
  }
}
