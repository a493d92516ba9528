/**
 * DOM rendering: the model in, elements out.  Rendering is replace-not-
 * patch (the console is a low-frequency operator tool), and every number
 * shown is read straight from the model, which holds only server values.
 */

import type { ConsoleModel, RiskPoint } from './state'

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag)
  node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

function riskGauge(model: ConsoleModel): HTMLElement {
  const view = model.view!
  const box = el('section', 'gauge card')
  box.appendChild(el('h2', 'card-title', 'risk (log scale)'))

  const logAlpha = Math.log(view.alpha)
  const points = model.riskHistory
  const floor = Math.min(logAlpha * 1.6, ...points.map((p) => p.logRisk), -1)
  const ceil = Math.max(0.5, ...points.map((p) => p.logRisk))
  const scale = (value: number) => (ceil - value) / (ceil - floor)

  const width = 640
  const height = 180
  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg')
  svg.setAttribute('viewBox', `0 0 ${width} ${height}`)
  svg.setAttribute('class', 'gauge-svg')

  const alphaY = scale(logAlpha) * height
  const alphaLine = document.createElementNS('http://www.w3.org/2000/svg', 'line')
  alphaLine.setAttribute('x1', '0')
  alphaLine.setAttribute('x2', String(width))
  alphaLine.setAttribute('y1', String(alphaY))
  alphaLine.setAttribute('y2', String(alphaY))
  alphaLine.setAttribute('class', 'alpha-line')
  svg.appendChild(alphaLine)

  const alphaLabel = document.createElementNS('http://www.w3.org/2000/svg', 'text')
  alphaLabel.setAttribute('x', '4')
  alphaLabel.setAttribute('y', String(alphaY - 4))
  alphaLabel.setAttribute('class', 'alpha-label')
  alphaLabel.textContent = `α = ${view.alpha}`
  svg.appendChild(alphaLabel)

  if (points.length > 0) {
    const step = width / Math.max(points.length, view.ell_min, 40)
    const path = points
      .map((p: RiskPoint, i: number) => {
        const x = (i + 1) * step
        const y = scale(p.logRisk) * height
        return `${i === 0 ? 'M' : 'L'}${x.toFixed(1)},${y.toFixed(1)}`
      })
      .join(' ')
    const line = document.createElementNS('http://www.w3.org/2000/svg', 'path')
    line.setAttribute('d', `M0,${scale(0) * height} ${path.replace(/^M/, 'L')}`)
    line.setAttribute('class', 'risk-path')
    svg.appendChild(line)
  }
  box.appendChild(svg)

  const readout = el('div', 'risk-readout')
  readout.appendChild(el('span', 'risk-value', `risk ${view.risk.toExponential(3)}`))
  readout.appendChild(el('span', 'risk-draws', `${view.iterations} draws`))
  readout.appendChild(
    el('span', 'risk-target', view.risk <= view.alpha ? 'at or below α' : 'above α'),
  )
  box.appendChild(readout)
  return box
}

function banner(model: ConsoleModel): HTMLElement | null {
  if (model.step.kind !== 'done') return null
  const verdict = model.step.verdict
  const node = el(
    'div',
    verdict === 'Consistent' ? 'banner banner-good' : 'banner banner-warn',
    verdict === 'Consistent'
      ? 'Audit complete: Consistent'
      : 'Audit complete: Inconclusive',
  )
  node.dataset.verdict = verdict
  return node
}

export interface Handlers {
  onCreate(manifest: string, tabulation: string, alpha: string, seed: string): void
  onDraw(): void
  onUpload(csv: string): void
  onInterpret(choice: string): void
}

function setupCard(handlers: Handlers): HTMLElement {
  const card = el('section', 'card setup-card')
  card.appendChild(el('h2', 'card-title', 'start a session'))
  const manifest = el('textarea', 'input-area') as HTMLTextAreaElement
  manifest.placeholder = 'ballot manifest CSV (batch_id,size)'
  manifest.id = 'manifest-input'
  const tabulation = el('textarea', 'input-area') as HTMLTextAreaElement
  tabulation.placeholder = 'tabulation CSV (batch_id,s_tab,w_tab,l_tab)'
  tabulation.id = 'tabulation-input'
  const alpha = el('input', 'input-line') as HTMLInputElement
  alpha.value = '0.05'
  alpha.id = 'alpha-input'
  const seed = el('input', 'input-line') as HTMLInputElement
  seed.value = '0'
  seed.id = 'seed-input'
  const go = el('button', 'button primary', 'create session') as HTMLButtonElement
  go.id = 'create-button'
  go.onclick = () =>
    handlers.onCreate(manifest.value, tabulation.value, alpha.value, seed.value)
  for (const [label, node] of [
    ['manifest', manifest],
    ['tabulation', tabulation],
    ['risk limit α', alpha],
    ['sampling seed', seed],
  ] as const) {
    const row = el('label', 'field')
    row.appendChild(el('span', 'field-label', label))
    row.appendChild(node)
    card.appendChild(row)
  }
  card.appendChild(go)
  return card
}

function batchCard(model: ConsoleModel, handlers: Handlers): HTMLElement {
  const card = el('section', 'card step-card')
  card.appendChild(el('h2', 'card-title', 'next draw'))
  card.appendChild(
    el('p', 'step-text', 'sample the next batch; the seed-committed stream decides'),
  )
  const go = el('button', 'button primary', 'draw batch') as HTMLButtonElement
  go.id = 'draw-button'
  go.disabled = model.busy
  go.onclick = () => handlers.onDraw()
  card.appendChild(go)
  return card
}

function uploadCard(model: ConsoleModel, handlers: Handlers): HTMLElement {
  const batch = model.step.kind === 'upload' ? model.step.batch : -1
  const card = el('section', 'card step-card')
  card.appendChild(el('h2', 'card-title', `batch ${batch}`))
  card.appendChild(
    el(
      'p',
      'step-text',
      `retrieve batch ${batch}, produce its CVR, and paste or upload the CSV`,
    ),
  )
  const area = el('textarea', 'input-area tall') as HTMLTextAreaElement
  area.id = 'cvr-input'
  area.placeholder = 'row,identifier,w,l\n1,...'
  const problem = el('p', 'inline-error')
  problem.id = 'cvr-shape-error'
  const go = el('button', 'button primary', 'submit CVR') as HTMLButtonElement
  go.id = 'cvr-button'
  go.disabled = model.busy
  go.onclick = () => handlers.onUpload(area.value)
  card.appendChild(area)
  card.appendChild(problem)
  card.appendChild(go)
  return card
}

function ballotCard(model: ConsoleModel, handlers: Handlers): HTMLElement {
  const step = model.step
  if (step.kind !== 'ballot') throw new Error('render out of step')
  const card = el('section', 'card step-card')
  card.appendChild(el('h2', 'card-title', 'retrieve ballot'))
  const what = el('p', 'step-text')
  what.innerHTML = ''
  what.appendChild(el('span', '', 'retrieve the ballot labeled '))
  const ident = el('code', 'identifier', step.identifier === '' ? '(unlabeled)' : step.identifier)
  ident.id = 'ballot-identifier'
  what.appendChild(ident)
  what.appendChild(el('span', '', ` from batch ${step.batch} (CVR row ${step.row})`))
  card.appendChild(what)

  const form = el('div', 'interp-form')
  for (const [value, label] of [
    ['winner', 'vote for the declared winner'],
    ['loser', 'vote for the declared loser'],
    ['blank', 'no vote in this contest'],
    ['missing', 'ballot cannot be found'],
  ] as const) {
    const button = el('button', 'button choice', label) as HTMLButtonElement
    button.dataset.choice = value
    button.disabled = model.busy
    button.onclick = () => handlers.onInterpret(value)
    form.appendChild(button)
  }
  card.appendChild(form)
  return card
}

export function render(root: HTMLElement, model: ConsoleModel, handlers: Handlers): void {
  root.textContent = ''
  const head = el('header', 'masthead')
  head.appendChild(el('h1', 'masthead-title', 'audit console'))
  if (model.view) {
    head.appendChild(
      el(
        'div',
        'masthead-meta',
        `session ${model.view.session_id} · seed ${model.view.seed} · μ ${model.view.mu.toFixed(4)}`,
      ),
    )
  }
  root.appendChild(head)

  if (model.error) {
    const msg = el('div', 'banner banner-error')
    msg.id = 'error-banner'
    msg.appendChild(el('span', '', model.error))
    msg.appendChild(el('span', 'retry-hint', ' — fix or retry the same step'))
    root.appendChild(msg)
  }
  if (model.notice) {
    const note = el('div', 'banner banner-note', model.notice)
    note.id = 'notice-banner'
    root.appendChild(note)
  }

  const done = banner(model)
  if (done) root.appendChild(done)

  switch (model.step.kind) {
    case 'setup':
      root.appendChild(setupCard(handlers))
      break
    case 'batch':
      root.appendChild(batchCard(model, handlers))
      break
    case 'upload':
      root.appendChild(uploadCard(model, handlers))
      break
    case 'ballot':
      root.appendChild(ballotCard(model, handlers))
      break
    case 'done':
      break
  }

  if (model.view) root.appendChild(riskGauge(model))
}
