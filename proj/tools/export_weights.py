#!/usr/bin/env python3
# Copyright 2026 The ecgcls Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Exports backbone weights to safetensors for `ecgcls --weights`.

  export_weights.py --backbone vgg16 --out vgg16.safetensors            # ImageNet
  export_weights.py --backbone vgg16 --out w.safetensors --random 7 \
      --reference ref.safetensors                                       # test oracle

With --random the network is randomly initialized from the given seed
instead of downloading pretrained weights. --reference additionally writes a
seeded input batch and the classifier-less features computed by the Python
implementation, for cross-checking the C++ forward pass.
"""

import argparse
import sys

import torch

NATIVE = {
    "vgg16": 224,
    "vgg19": 224,
    "resnet50": 224,
    "densenet201": 224,
    "inception_v3": 299,
    "inception_resnet_v2": 299,
}


def build(name, pretrained):
    if name == "inception_resnet_v2":
        import timm

        return timm.create_model(name, pretrained=pretrained, num_classes=0)
    import torchvision.models as tvm

    weights = "DEFAULT" if pretrained else None
    if name == "inception_v3":
        model = tvm.inception_v3(weights=weights, aux_logits=pretrained, init_weights=not pretrained)
        model.fc = torch.nn.Identity()
        # The C++ side standardizes with mean = std = 0.5 directly.
        model.transform_input = False
        return model
    model = getattr(tvm, name)(weights=weights)
    if name.startswith("vgg"):
        model.classifier[6] = torch.nn.Identity()
    elif name == "resnet50":
        model.fc = torch.nn.Identity()
    elif name == "densenet201":
        model.classifier = torch.nn.Identity()
    return model


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--backbone", required=True, choices=sorted(NATIVE))
    ap.add_argument("--out", required=True)
    ap.add_argument("--random", type=int, default=None, metavar="SEED")
    ap.add_argument("--reference", default=None)
    ap.add_argument("--batch", type=int, default=2)
    args = ap.parse_args()

    from safetensors.torch import save_file

    if args.random is not None:
        torch.manual_seed(args.random)
    model = build(args.backbone, pretrained=args.random is None).eval()
    if args.random is not None:
        # Non-trivial batch-norm statistics so the buffers are exercised.
        with torch.no_grad():
            for m in model.modules():
                if isinstance(m, torch.nn.BatchNorm2d):
                    m.running_mean.uniform_(-0.1, 0.1)
                    m.running_var.uniform_(0.5, 1.5)
    state = {k: v.detach().contiguous() for k, v in model.state_dict().items()}
    save_file(state, args.out)

    if args.reference:
        size = NATIVE[args.backbone]
        gen = torch.Generator().manual_seed(1234)
        x = torch.randn(args.batch, 3, size, size, generator=gen)
        with torch.no_grad():
            features = model(x)
        save_file({"input": x.contiguous(), "features": features.contiguous()}, args.reference)
    return 0


if __name__ == "__main__":
    sys.exit(main())
