import { AuditApi } from './api'
import { ConsoleController } from './controller'
import { render, type Handlers } from './render'
import type { Interpretation } from './types'

const root = document.getElementById('app')
if (!root) throw new Error('missing #app mount point')

const controller = new ConsoleController(new AuditApi(''))

const handlers: Handlers = {
  onCreate: (manifest, tabulation, alpha, seed) => {
    void controller.create(manifest, tabulation, alpha, seed)
  },
  onDraw: () => {
    void controller.draw()
  },
  onUpload: (csv) => {
    const result = controller.uploadCvr(csv)
    if (result.shapeError) {
      const slot = document.getElementById('cvr-shape-error')
      if (slot) slot.textContent = result.shapeError
    }
  },
  onInterpret: (choice) => {
    void controller.interpret(choice as Interpretation)
  },
}

controller.subscribe((model) => render(root, model, handlers))
render(root, controller.model, handlers)

// one tab drives one session; a reload can pick it back up via ?session=
const params = new URLSearchParams(window.location.search)
const existing = params.get('session')
if (existing) void controller.resume(existing)
