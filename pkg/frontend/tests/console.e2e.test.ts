// @vitest-environment jsdom
/**
 * End-to-end: a scripted session drives a zero-error audit through the
 * real audit service to Consistent, pressing the same buttons an audit
 * team would.  Checks along the way:
 *   - every risk value the console holds equals the service's log_risk
 *     (independently re-fetched) within 1e-9;
 *   - the Stop banner appears exactly at the server-declared stop, and
 *     never before;
 *   - the console performs no local state transitions: each step change
 *     follows a server response.
 */

import { spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { AuditApi } from '../src/api'
import { ConsoleController } from '../src/controller'
import { render, type Handlers } from '../src/render'
import type { Interpretation } from '../src/types'

const PORT = 8765 + (process.pid % 500)
const BASE = `http://127.0.0.1:${PORT}`

// --- a tiny zero-error election, built right here -------------------------

interface Ballot {
  id: string
  w: number
  l: number
  batch: number
}

const BALLOTS: Ballot[] = []
{
  // two batches of 10; 11 winner votes, 9 loser votes overall
  let i = 0
  for (let batch = 1; batch <= 2; batch++) {
    for (let slot = 0; slot < 10; slot++) {
      const w = i < 11 ? 1 : 0
      BALLOTS.push({ id: `b${i}`, w, l: w ? 0 : 1, batch })
      i += 1
    }
  }
}

function manifestCsv(): string {
  return 'batch_id,size\n1,10\n2,10\n'
}

function tabulationCsv(): string {
  const rows = [1, 2].map((batch) => {
    const mine = BALLOTS.filter((b) => b.batch === batch)
    const w = mine.reduce((acc, b) => acc + b.w, 0)
    const l = mine.reduce((acc, b) => acc + b.l, 0)
    return `${batch},${mine.length},${w},${l}`
  })
  return 'batch_id,s_tab,w_tab,l_tab\n' + rows.join('\n') + '\n'
}

function cvrCsv(batch: number): string {
  const mine = BALLOTS.filter((b) => b.batch === batch)
  const rows = mine.map((b, index) => `${index + 1},${b.id},${b.w},${b.l}`)
  return 'row,identifier,w,l\n' + rows.join('\n') + '\n'
}

function interpret(identifier: string): Interpretation {
  const ballot = BALLOTS.find((b) => b.id === identifier)
  if (!ballot) return 'missing'
  if (ballot.w) return 'winner'
  if (ballot.l) return 'loser'
  return 'blank'
}

// --- service lifecycle -----------------------------------------------------

let service: ChildProcess

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const response = await fetch(`${BASE}/sessions`)
      if (response.ok) return
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 100))
  }
  throw new Error('audit service did not come up')
}

beforeAll(async () => {
  const store = mkdtempSync(join(tmpdir(), 'audit-console-e2e-'))
  service = spawn(
    'python3',
    ['-m', 'rlakit.cli', 'serve', '--port', String(PORT), '--store', store],
    { cwd: join(process.cwd(), '..'), stdio: 'ignore' },
  )
  await waitForService()
}, 30000)

afterAll(() => {
  service?.kill()
})

// --- the scripted session ---------------------------------------------------

describe('console end-to-end', () => {
  it('drives a zero-error audit to Consistent', async () => {
    const root = document.createElement('div')
    document.body.appendChild(root)
    const controller = new ConsoleController(new AuditApi(BASE))
    const handlers: Handlers = {
      onCreate: (m, t, a, s) => void controller.create(m, t, a, s),
      onDraw: () => void controller.draw(),
      onUpload: (csv) => void controller.uploadCvr(csv),
      onInterpret: (choice) => void controller.interpret(choice as Interpretation),
    }
    const rerender = () => render(root, controller.model, handlers)
    controller.subscribe(rerender)
    rerender()

    // operator fills the setup form and creates the session
    ;(document.getElementById('manifest-input') as HTMLTextAreaElement).value =
      manifestCsv()
    ;(document.getElementById('tabulation-input') as HTMLTextAreaElement).value =
      tabulationCsv()
    ;(document.getElementById('alpha-input') as HTMLInputElement).value = '0.05'
    ;(document.getElementById('seed-input') as HTMLInputElement).value = '42'
    await controller.create(manifestCsv(), tabulationCsv(), '0.05', '42')
    expect(controller.model.view?.status).toBe('AwaitingBatch')
    const sessionId = controller.model.view!.session_id

    let guard = 0
    while (controller.model.step.kind !== 'done') {
      guard += 1
      if (guard > 2000) throw new Error('audit did not terminate')

      // the banner must not be shown while the server says keep going
      expect(root.querySelector('[data-verdict]')).toBeNull()

      if (controller.model.step.kind === 'batch') {
        ;(document.getElementById('draw-button') as HTMLButtonElement).click()
        await waitIdle(controller) // clicks fire async voids; wait them out
      } else if (controller.model.step.kind === 'upload') {
        const batch = controller.model.step.batch
        ;(document.getElementById('cvr-input') as HTMLTextAreaElement).value =
          cvrCsv(batch)
        const result = controller.uploadCvr(cvrCsv(batch))
        expect(result.shapeError).toBeUndefined()
        await result.done
      } else if (controller.model.step.kind === 'ballot') {
        const identifier = controller.model.step.identifier
        const rendered = document.getElementById('ballot-identifier')
        expect(rendered?.textContent).toBe(identifier === '' ? '(unlabeled)' : identifier)
        const choice = interpret(identifier)
        const button = root.querySelector(
          `[data-choice="${choice}"]`,
        ) as HTMLButtonElement
        expect(button).not.toBeNull()
        await controller.interpret(choice)
      }
    }

    // stop banner appears exactly at the server-declared stop
    const banner = root.querySelector('[data-verdict]') as HTMLElement
    expect(banner).not.toBeNull()
    expect(banner.dataset.verdict).toBe('Consistent')
    expect(banner.textContent).toBe('Audit complete: Consistent')

    // every risk value the console holds equals the server's log_risk
    const independent = (await (
      await fetch(`${BASE}/sessions/${sessionId}`)
    ).json()) as { records: Array<{ log_risk: number }>; verdict: string; risk: number }
    expect(independent.verdict).toBe('Consistent')
    expect(controller.model.riskHistory.length).toBe(independent.records.length)
    controller.model.riskHistory.forEach((point, index) => {
      expect(
        Math.abs(point.logRisk - independent.records[index].log_risk),
      ).toBeLessThanOrEqual(1e-9)
    })

    // the rendered readout shows the server risk, formatted, not a local one
    const readout = root.querySelector('.risk-value') as HTMLElement
    expect(readout.textContent).toBe(`risk ${independent.risk.toExponential(3)}`)
  }, 120000)

  it('renders upload errors verbatim and stays on the same step', async () => {
    const root = document.createElement('div')
    document.body.appendChild(root)
    const controller = new ConsoleController(new AuditApi(BASE))
    const handlers: Handlers = {
      onCreate: () => undefined,
      onDraw: () => undefined,
      onUpload: () => undefined,
      onInterpret: () => undefined,
    }
    controller.subscribe(() => render(root, controller.model, handlers))

    await controller.create(manifestCsv(), tabulationCsv(), '0.05', '7')
    await controller.draw()
    const stepBefore = controller.model.step
    const upload = controller.uploadCvr('row,identifier,w,l\n1,__bot:1,1,0\n')
    await upload.done
    expect(controller.model.error).toContain('reserved')
    expect(controller.model.step).toEqual(stepBefore)
    expect(document.getElementById('error-banner')).not.toBeNull()
  }, 30000)

  it('rejects malformed uploads client-side without a round trip', async () => {
    const controller = new ConsoleController(new AuditApi(BASE))
    const result = controller.uploadCvr('this is not a csv')
    expect(result.done).toBeNull()
    expect(result.shapeError).toContain('header')
  })
})

async function waitIdle(controller: ConsoleController): Promise<void> {
  for (let i = 0; i < 200 && controller.model.busy; i++) {
    await new Promise((resolve) => setTimeout(resolve, 10))
  }
}
