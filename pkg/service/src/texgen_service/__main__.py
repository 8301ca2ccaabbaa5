"""Run the service:  python -m texgen_service [--mode real] [--port 8765]"""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app


def main() -> None:
    parser = argparse.ArgumentParser(prog="texgen-service")
    parser.add_argument("--mode", choices=("procedural", "real"), default="procedural")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--max-concepts", type=int, default=64)
    parser.add_argument("--inversion-lr", type=float, default=1e-3)
    parser.add_argument("--sample-steps", type=int, default=8)
    parser.add_argument("--concept-dir", default=None,
                        help="directory persisting fine-tuned concept weights")
    args = parser.parse_args()

    app = create_app(
        mode=args.mode,
        max_concepts=args.max_concepts,
        inversion_lr=args.inversion_lr,
        sample_steps=args.sample_steps,
        concept_dir=args.concept_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
