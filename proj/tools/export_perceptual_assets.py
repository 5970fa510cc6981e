#!/usr/bin/env python3
"""Export VGG weights into the asset directory read by RPBG_PERCEPTUAL_DIR.

Writes vgg19.pt (torchvision VGG-19 features, for the training loss) and
lpips_vgg.pt (torchvision VGG-16 features plus the lpips linear heads), and
a manifest.json with sha256 checksums.

Pretrained weights need network access on first use and the `lpips` package.
--random writes randomly initialized weights in the same layout, for format checks.
"""

import argparse
import hashlib
import json
import os
from pathlib import Path

import torch

VERSION = 1


def vgg_features(arch, pretrained):
    import torchvision

    ctor = getattr(torchvision.models, arch)
    weights = "IMAGENET1K_V1" if pretrained else None
    model = ctor(weights=weights).features
    return {f"features.{k}": v for k, v in model.state_dict().items()}


def lpips_heads(pretrained, generator):
    channels = [64, 128, 256, 512, 512]
    if not pretrained:
        return {f"lin{k}.model.1.weight": torch.rand(1, c, 1, 1, generator=generator) / c for k, c in enumerate(channels)}
    import lpips

    path = Path(lpips.__file__).parent / "weights" / "v0.1" / "vgg.pth"
    state = torch.load(path, map_location="cpu")
    return {k: v for k, v in state.items() if k.startswith("lin") and k.endswith("model.1.weight")}


def write_asset(out, name, tensors, manifest):
    file = out / f"{name}.pt"
    torch.save({k: v.detach().float().contiguous() for k, v in tensors.items()}, file)
    digest = hashlib.sha256(file.read_bytes()).hexdigest()
    manifest.setdefault("assets", {})[name] = {"file": file.name, "sha256": digest, "version": VERSION}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--random", action="store_true", help="random weights instead of pretrained ones")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    gen = torch.Generator().manual_seed(args.seed)
    pretrained = not args.random
    args.out.mkdir(parents=True, exist_ok=True)
    manifest_path = args.out / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    manifest["version"] = VERSION

    write_asset(args.out, "vgg19", vgg_features("vgg19", pretrained), manifest)
    lp = vgg_features("vgg16", pretrained)
    lp.update(lpips_heads(pretrained, gen))
    write_asset(args.out, "lpips_vgg", lp, manifest)

    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {args.out} ({'random' if args.random else 'pretrained'} weights)")
    return os.EX_OK


if __name__ == "__main__":
    raise SystemExit(main())
