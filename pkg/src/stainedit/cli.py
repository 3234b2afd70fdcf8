"""Command-line entry points: corpus prep, training, editing, serving."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import corpus as corpus_mod
from .checkpoint import Checkpoint
from .color import lab_to_rgb, rgb_to_lab
from .corpus import CorpusManifest, Domain, SlideImage
from .editing import EditParams, edited_generate, extract_basis
from .losses import LossWeights
from .networks import Generator, NetConfig
from .survey import export_survey_pairs
from .training import TrainConfig, fit


def _cmd_prepare(args) -> int:
    slides = []
    in_dir = Path(args.in_dir)
    for domain in Domain:
        domain_dir = in_dir / domain.value
        if not domain_dir.is_dir():
            print(f"error: expected slide directory {domain_dir}", file=sys.stderr)
            return 2
        for path in sorted(domain_dir.iterdir()):
            pixels = np.asarray(Image.open(path).convert("RGB"))
            slides.append(SlideImage(pixels, path.stem, domain))
    manifest = corpus_mod.build_manifest(
        slides, args.out, seed=args.seed,
        tau_bg=args.tau_bg, l_white=args.l_white, tau_ent=args.tau_ent,
    )
    for domain in Domain:
        print(f"{domain.value}: {manifest.count(domain)} tiles")
    print(f"manifest written to {Path(args.out) / 'manifest.txt'}")
    return 0


def _cmd_synth(args) -> int:
    manifest = corpus_mod.synth_corpus(args.n, args.out, size_px=args.size, seed=args.seed)
    print(f"generated {args.n} tiles per domain at {args.size}px -> {Path(args.out) / 'manifest.txt'}")
    del manifest
    return 0


def _cmd_train(args) -> int:
    manifest = CorpusManifest.load(args.corpus)
    net_cfg = NetConfig(
        base_channels=args.base_channels,
        n_res=args.n_res,
        image_px=manifest.tile_px,
        d_base_channels=args.d_base_channels,
    )
    cfg = TrainConfig(
        total_steps=args.steps,
        seed=args.seed,
        batch_size=args.batch,
        lr=args.lr,
        saliency_masking=not args.no_saliency_mask,
        checkpoint_interval=args.checkpoint_interval,
        context_pairing=args.context_pairing,
    )
    weights = LossWeights(context=args.lambda_context, identity=args.lambda_identity)
    ckpt = fit(manifest, net_cfg, cfg, weights, args.out, resume_from=args.resume)
    print(f"trained to step {ckpt.step}; checkpoints in {args.out}")
    return 0


def _load_generator(ckpt_path: str, direction: str) -> Generator:
    ckpt = Checkpoint.load(ckpt_path)
    gen = Generator(NetConfig(**ckpt.config["net"]), direction)
    gen.load_state_dict(ckpt.models["g_ab" if direction == "he2p63" else "g_ba"])
    gen.eval()
    gen.requires_grad_(False)
    return gen


def _cmd_edit(args) -> int:
    import torch

    gen = _load_generator(args.ckpt, args.direction)
    rgb = np.asarray(Image.open(args.in_path).convert("RGB"))
    px = gen.cfg.image_px
    if rgb.shape[:2] != (px, px):
        print(f"error: tile must be {px}x{px}, got {rgb.shape[1]}x{rgb.shape[0]}", file=sys.stderr)
        return 2
    tensor = torch.from_numpy(rgb_to_lab(rgb).transpose(2, 0, 1).astype(np.float32))[None]

    basis = extract_basis(gen.mixer.weight)
    j, k = (int(v) for v in args.range.split(":"))
    params = EditParams(j=j, k=k, m=args.m)
    params.validate(len(basis))
    out = edited_generate(gen, tensor, params, basis)
    Image.fromarray(lab_to_rgb(out[0].numpy().transpose(1, 2, 0))).save(args.out)
    print(f"wrote {args.out} (range {j}:{k}, m={args.m})")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionState, create_app

    state = SessionState()
    summary = state.load_model(args.ckpt)
    print(f"serving checkpoint {summary['checkpoint']} (step {summary['step']}) on port {args.port}")
    uvicorn.run(create_app(state), host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_survey_pairs(args) -> int:
    packet = export_survey_pairs(args.real, args.fake, args.n, args.seed, args.out)
    print(f"wrote {len(packet.pages)} pages; key at {packet.key_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stainedit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="slice, filter and persist raster slides into a tile corpus")
    p.add_argument("--in", dest="in_dir", required=True, help="directory with HE/ and P63/ slide subdirectories")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau-bg", type=float, default=corpus_mod.DEFAULT_TAU_BG)
    p.add_argument("--l-white", type=float, default=corpus_mod.DEFAULT_L_WHITE)
    p.add_argument("--tau-ent", type=float, default=corpus_mod.DEFAULT_TAU_ENT)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("synth", help="generate a procedural two-domain corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True, help="tiles per domain")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train the translation model on a corpus")
    p.add_argument("--corpus", required=True, help="path to manifest.txt")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--base-channels", type=int, default=32)
    p.add_argument("--d-base-channels", type=int, default=64)
    p.add_argument("--n-res", type=int, default=4)
    p.add_argument("--checkpoint-interval", type=int, default=1000)
    p.add_argument("--no-saliency-mask", action="store_true", help="disable saliency-scaled adversarial gradients")
    p.add_argument("--lambda-context", type=float, default=1.0)
    p.add_argument("--lambda-identity", type=float, default=None)
    p.add_argument("--context-pairing", choices=["literal", "self"], default="literal")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("edit", help="apply an eigenvector edit to one tile")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--direction", choices=["he2p63", "p632he"], required=True)
    p.add_argument("--range", default="1:16", help="inclusive eigenvector rank range J:K")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("serve", help="run the HTTP editing service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("survey-pairs", help="export blind real-vs-generated comparison pages")
    p.add_argument("--real", required=True)
    p.add_argument("--fake", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_survey_pairs)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
