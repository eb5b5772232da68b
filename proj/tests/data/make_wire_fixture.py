"""Writes wire_golden.json: request bodies for the sidecar protocol built with
the Python standard library, for byte comparison against the C++ codec."""
import base64
import json
import struct
from pathlib import Path


def b64(values):
    return base64.b64encode(struct.pack("<%df" % len(values), *values)).decode("ascii")


def dump(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


image = [((i * 37) % 11) / 8.0 - 0.5 for i in range(12)]  # 2 x 2 x 3
noise = [((i * 5) % 7) / 4.0 - 0.75 for i in range(12)]
second = [i / 16.0 for i in range(4 * 3 * 3)]  # 4 x 3 x 3

golden = {
    "image": image,
    "noise": noise,
    "second": second,
    "image_b64": b64(image),
    "predict_request": dump({"image_b64": b64(image), "shape": [2, 2, 3], "t": 500, "cond_id": "toy"}),
    "predict_request_echo": dump(
        {"image_b64": b64(image), "shape": [2, 2, 3], "t": 500, "cond_id": "toy", "epsilon_b64": b64(noise)}
    ),
    "invert_request": dump(
        {"images_b64": [b64(image), b64(second)], "shapes": [[2, 2, 3], [4, 3, 3]], "init_label": "a toy"}
    ),
    "image_request": dump({"image_b64": b64(image), "shape": [2, 2, 3]}),
    "predict_response": dump({"epsilon_b64": b64(noise), "shape": [2, 2, 3]}),
    "features_response": dump({"features_b64": b64([0.5, -1.0, 2.25]), "dim": 3}),
    "depth_response": dump({"depth_b64": b64([1.0, 2.0, 3.0, 4.0]), "shape": [2, 2]}),
    "mask_response": dump({"mask_b64": b64([0.0, 1.0, 1.0, 0.0]), "shape": [2, 2, 1]}),
}

Path(__file__).with_name("wire_golden.json").write_text(json.dumps(golden, indent=1) + "\n")
