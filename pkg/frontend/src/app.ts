// DOM wiring: sliders, direction toggle, significance bars, and the
// three-panel comparison view (edited / unedited / reference).

import { ApiClient } from './api';
import { UiController } from './controller';
import { barHeights } from './render';
import {
  Direction,
  MULTIPLIER_MAX,
  MULTIPLIER_MIN,
  MULTIPLIER_STEP,
  RANK_MAX,
  RANK_MIN,
} from './state';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function pngUrl(base64: string): string {
  return `data:image/png;base64,${base64}`;
}

export function mountApp(): void {
  const api = new ApiClient('');
  const banner = el<HTMLDivElement>('banner');
  const editedImg = el<HTMLImageElement>('edited-img');
  const baselineImg = el<HTMLImageElement>('baseline-img');
  const referenceImg = el<HTMLImageElement>('reference-img');
  const jSlider = el<HTMLInputElement>('j-slider');
  const kSlider = el<HTMLInputElement>('k-slider');
  const mSlider = el<HTMLInputElement>('m-slider');
  const jValue = el<HTMLSpanElement>('j-value');
  const kValue = el<HTMLSpanElement>('k-value');
  const mValue = el<HTMLSpanElement>('m-value');
  const bars = el<HTMLDivElement>('significance-bars');

  const controller = new UiController(api, {
    onPreview: (png) => {
      editedImg.src = pngUrl(png);
    },
    onBaseline: (png) => {
      baselineImg.src = pngUrl(png);
    },
    onError: (message) => showToast(message),
  });

  jSlider.min = kSlider.min = String(RANK_MIN);
  jSlider.max = kSlider.max = String(RANK_MAX);
  mSlider.min = String(MULTIPLIER_MIN);
  mSlider.max = String(MULTIPLIER_MAX);
  mSlider.step = String(MULTIPLIER_STEP);

  function syncControls(): void {
    jSlider.value = String(controller.state.j);
    kSlider.value = String(controller.state.k);
    mSlider.value = String(controller.state.m);
    jValue.textContent = String(controller.state.j);
    kValue.textContent = String(controller.state.k);
    mValue.textContent = controller.state.m.toFixed(1);
  }

  let toastTimer: ReturnType<typeof setTimeout> | null = null;
  function showToast(message: string): void {
    const toast = el<HTMLDivElement>('toast');
    toast.textContent = message;
    toast.classList.add('visible');
    if (toastTimer) clearTimeout(toastTimer);
    toastTimer = setTimeout(() => toast.classList.remove('visible'), 4000);
  }

  jSlider.addEventListener('input', () => {
    controller.setJ(Number(jSlider.value));
    syncControls();
  });
  kSlider.addEventListener('input', () => {
    controller.setK(Number(kSlider.value));
    syncControls();
  });
  mSlider.addEventListener('input', () => {
    controller.setM(Number(mSlider.value));
    syncControls();
  });
  el<HTMLButtonElement>('m-reset').addEventListener('click', () => {
    controller.setM(0);
    syncControls();
  });

  for (const direction of ['he2p63', 'p632he'] as Direction[]) {
    el<HTMLInputElement>(`dir-${direction}`).addEventListener('change', () => {
      void controller.setDirection(direction).catch((err) => showToast(String(err)));
    });
  }

  el<HTMLInputElement>('tile-input').addEventListener('change', async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      await controller.loadImage(await file.arrayBuffer());
    } catch (err) {
      showToast(err instanceof Error ? err.message : String(err));
    }
  });

  el<HTMLInputElement>('reference-input').addEventListener('change', (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    referenceImg.src = URL.createObjectURL(file);
  });

  async function boot(): Promise<void> {
    try {
      const health = await api.health();
      if (!health.model_loaded) {
        banner.textContent = 'Service is up but no model is loaded.';
        banner.classList.add('visible');
        return;
      }
      banner.classList.remove('visible');
      const basis = await api.basis();
      renderBars(basis[controller.state.direction] ?? []);
    } catch {
      banner.textContent = 'Editing service unreachable.';
      banner.classList.add('visible');
      const retry = document.createElement('button');
      retry.textContent = 'Retry';
      retry.addEventListener('click', () => {
        banner.textContent = '';
        void boot();
      });
      banner.appendChild(retry);
    }
  }

  function renderBars(significances: number[]): void {
    bars.replaceChildren();
    for (const spec of barHeights(significances)) {
      const bar = document.createElement('div');
      bar.className = 'bar';
      bar.style.height = `${spec.heightPct}%`;
      bar.title = spec.label;
      bars.appendChild(bar);
    }
  }

  syncControls();
  void boot();
}
