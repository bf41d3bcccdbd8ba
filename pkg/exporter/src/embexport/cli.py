"""embexport: encode prompt manifests and image directories into interchange files.

    embexport export-text --manifest M --out P [--normalize] [--encoder TAG]
    embexport export-images --dir D [--labels L.csv] --out P [--normalize] [--encoder TAG]

Exit codes: 0 success, 1 on any validation or encoder error.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import DEFAULT_ENCODER, EncoderError
from .export import ExportJob, export_images, export_text
from .writer import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embexport", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    text = sub.add_parser("export-text")
    text.add_argument("--manifest", required=True)
    text.add_argument("--out", required=True)
    text.add_argument("--normalize", action="store_true")
    text.add_argument("--encoder", default=DEFAULT_ENCODER)

    images = sub.add_parser("export-images")
    images.add_argument("--dir", required=True)
    images.add_argument("--labels", default=None)
    images.add_argument("--out", required=True)
    images.add_argument("--normalize", action="store_true")
    images.add_argument("--encoder", default=DEFAULT_ENCODER)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-text":
            job = ExportJob(out_prefix=args.out, manifest_path=args.manifest,
                            encoder_tag=args.encoder, normalize=args.normalize)
            export_text(job)
        else:
            job = ExportJob(out_prefix=args.out, image_dir=args.dir,
                            labels_csv=args.labels, encoder_tag=args.encoder,
                            normalize=args.normalize)
            export_images(job)
    except (ExportError, EncoderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}.manifest.json and {args.out}.f32")
    return 0


if __name__ == "__main__":
    sys.exit(main())
