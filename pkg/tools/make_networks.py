"""Regenerate the bundled benchmark network files.

Layer shapes follow the standard published topologies at batch 1 (224x224
inputs, 572x572 for UNet).  Run from the repo root:

    python tools/make_networks.py
"""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "accelsearch" / "data" / "networks"


def conv(name, C, K, k, out, stride=1, kind="conv", groups=1, kw=None):
    item = {"name": name, "type": kind, "C": C, "K": K, "R": k, "S": kw or k,
            "Xp": out, "Yp": out, "stride": stride}
    if groups != 1:
        item["groups"] = groups
    return item


def dwconv(name, channels, k, out, stride=1):
    return conv(name, 1, 1, k, out, stride, kind="dwconv", groups=channels)


def other(name, kind):
    return {"name": name, "type": kind}


def vgg16():
    layers, size, cin = [], 224, 3
    for stage, (width, reps) in enumerate([(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)], 1):
        for r in range(reps):
            layers.append(conv(f"conv{stage}_{r + 1}", cin, width, 3, size))
            cin = width
        layers.append(other(f"pool{stage}", "pool"))
        size //= 2
    layers += [other("fc6", "fc"), other("fc7", "fc"), other("fc8", "fc")]
    return {"name": "vgg16", "layers": layers}


def resnet50():
    layers = [conv("conv1", 3, 64, 7, 112, 2), other("pool1", "pool")]
    cin, size = 64, 56
    for stage, (mid, out, blocks) in enumerate(
            [(64, 256, 3), (128, 512, 4), (256, 1024, 6), (512, 2048, 3)], 2):
        for b in range(blocks):
            stride = 2 if (b == 0 and stage > 2) else 1
            osize = size // stride
            pre = f"res{stage}{chr(ord('a') + b)}"
            layers.append(conv(f"{pre}_branch2a", cin, mid, 1, size))
            layers.append(conv(f"{pre}_branch2b", mid, mid, 3, osize, stride))
            layers.append(conv(f"{pre}_branch2c", mid, out, 1, osize))
            if b == 0:
                layers.append(conv(f"{pre}_branch1", cin, out, 1, osize, stride))
            cin, size = out, osize
    layers += [other("pool5", "pool"), other("fc1000", "fc")]
    return {"name": "resnet50", "layers": layers}


def unet():
    layers = []
    size, cin = 572, 1
    for level, width in enumerate([64, 128, 256, 512], 1):
        size -= 2
        layers.append(conv(f"enc{level}_1", cin, width, 3, size))
        size -= 2
        layers.append(conv(f"enc{level}_2", width, width, 3, size))
        layers.append(other(f"pool{level}", "pool"))
        size //= 2
        cin = width
    size -= 2
    layers.append(conv("mid_1", 512, 1024, 3, size))
    size -= 2
    layers.append(conv("mid_2", 1024, 1024, 3, size))
    cin = 1024
    for level, width in zip([4, 3, 2, 1], [512, 256, 128, 64]):
        size *= 2
        # transposed 2x2 conv, costed as a forward conv of the same extents
        layers.append(conv(f"up{level}", cin, width, 2, size))
        size -= 2
        layers.append(conv(f"dec{level}_1", 2 * width, width, 3, size))
        size -= 2
        layers.append(conv(f"dec{level}_2", width, width, 3, size))
        cin = width
    layers.append(conv("final", 64, 2, 1, size))
    return {"name": "unet", "layers": layers}


def _inverted_residual(layers, pre, cin, cout, expand, k, stride, size):
    osize = size // stride if stride > 1 else size
    hidden = cin * expand
    if expand != 1:
        layers.append(conv(f"{pre}_expand", cin, hidden, 1, size))
    layers.append(dwconv(f"{pre}_dw", hidden, k, osize, stride))
    layers.append(conv(f"{pre}_project", hidden, cout, 1, osize))
    return osize


def mobilenetv2():
    layers = [conv("conv_stem", 3, 32, 3, 112, 2)]
    cin, size, idx = 32, 112, 0
    for t, c, n, s in [(1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
                       (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]:
        for i in range(n):
            size = _inverted_residual(layers, f"block{idx}", cin, c, t, 3, s if i == 0 else 1, size)
            cin, idx = c, idx + 1
    layers.append(conv("conv_head", 320, 1280, 1, size))
    layers += [other("pool", "pool"), other("classifier", "fc")]
    return {"name": "mobilenetv2", "layers": layers}


def mnasnet():
    layers = [conv("conv_stem", 3, 32, 3, 112, 2),
              dwconv("sep_dw", 32, 3, 112),
              conv("sep_project", 32, 16, 1, 112)]
    cin, size, idx = 16, 112, 0
    for t, k, s, c, n in [(3, 3, 2, 24, 3), (3, 5, 2, 40, 3), (6, 5, 2, 80, 3),
                          (6, 3, 1, 96, 2), (6, 5, 2, 192, 4), (6, 3, 1, 320, 1)]:
        for i in range(n):
            size = _inverted_residual(layers, f"block{idx}", cin, c, t, k, s if i == 0 else 1, size)
            cin, idx = c, idx + 1
    layers.append(conv("conv_head", 320, 1280, 1, size))
    layers += [other("pool", "pool"), other("classifier", "fc")]
    return {"name": "mnasnet", "layers": layers}


def squeezenet():
    layers = [conv("conv1", 3, 96, 7, 111, 2), other("pool1", "pool")]
    cin, size = 96, 55
    fires = [(2, 16, 64), (3, 16, 64), (4, 32, 128), "pool", (5, 32, 128), (6, 48, 192),
             (7, 48, 192), (8, 64, 256), "pool", (9, 64, 256)]
    for f in fires:
        if f == "pool":
            layers.append(other(f"pool_{size}", "pool"))
            size = (size - 3) // 2 + 1
            continue
        i, sq, ex = f
        layers.append(conv(f"fire{i}_squeeze", cin, sq, 1, size))
        layers.append(conv(f"fire{i}_expand1x1", sq, ex, 1, size))
        layers.append(conv(f"fire{i}_expand3x3", sq, ex, 3, size))
        cin = 2 * ex
    layers.append(conv("conv10", cin, 1000, 1, size))
    layers.append(other("pool10", "pool"))
    return {"name": "squeezenet", "layers": layers}


def smoke():
    """Six small layers mixing the shapes of the mobile benchmarks."""
    return {"name": "smoke", "layers": [
        conv("stem", 3, 16, 3, 56, 2),
        dwconv("dw", 16, 3, 56),
        conv("pw", 16, 32, 1, 56),
        conv("conv3x3", 32, 64, 3, 28, 2),
        conv("pw_down", 64, 128, 1, 14, 2),
        conv("head", 128, 256, 1, 7, 2),
    ]}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for fn in (vgg16, resnet50, unet, mobilenetv2, squeezenet, mnasnet, smoke):
        doc = fn()
        (OUT / f"{doc['name']}.json").write_text(json.dumps(doc, indent=1) + "\n")
        n = sum(1 for l in doc["layers"] if l["type"] in ("conv", "dwconv"))
        print(f"{doc['name']}: {n} conv layers")


if __name__ == "__main__":
    main()
