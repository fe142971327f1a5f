"""Service demo: spin up the HTTP service in-process, preview a mask, run a
seeded two-box job, and fetch the artifacts — the same flow the browser
editor drives.

    python3 demos/05_service_session.py
"""
import tempfile
import threading
import urllib.request
from pathlib import Path

from rangeforge import Denoiser, ProjectionConfig, save_checkpoint
from rangeforge.cli import main as cli
from rangeforge.records import dump_record, parse_record
from rangeforge.service import make_server
from rangeforge.tensorfile import tensor_from_bytes

grid_flags = ["--height", "32", "--width", "256"]
root = Path(tempfile.mkdtemp(prefix="rangeforge-demo-"))

scenes = root / "scenes"
cli(["synth", "--seed", "4", "--out-dir", str(scenes), "--cars", "0",
     "--name", "clear-road", *grid_flags])

ckpt = root / "ckpt"
save_checkpoint(Denoiser(seed=0), ckpt, sched_params={"T": 40, "beta_1": 1e-3, "beta_T": 0.2})

httpd, service = make_server(0, ckpt, scenes, cfg=ProjectionConfig(height=32, width=256))
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{httpd.server_address[1]}"
print("service:", base)


def call(method, path, body=None):
    data = dump_record(body).encode() if body else None
    with urllib.request.urlopen(urllib.request.Request(base + path, data=data, method=method)) as r:
        return r.status, dict(r.headers), r.read()


_, _, body = call("GET", "/scenes")
print("scenes:", parse_record(body.decode()))

_, headers, body = call("POST", "/mask/preview",
                        {"scene": "clear-road", "box": "12,0,-0.9,4.5,1.9,1.6,0"})
print(f"mask preview: {headers['X-Mask-Pixel-Count']} pixels, "
      f"tensor {tensor_from_bytes(body).shape}")

_, _, body = call("POST", "/jobs", {
    "scene": "clear-road", "seed": "5",
    "box.0": "12,0,-0.9,4.5,1.9,1.6,0",
    "box.1": "9,-3.5,-0.95,4.2,1.8,1.5,0.9",
})
job = parse_record(body.decode())
print("submitted:", job["id"])

import time
while True:
    _, _, body = call("GET", f"/jobs/{job['id']}")
    rec = parse_record(body.decode())
    if rec["status"] in ("done", "failed"):
        break
    time.sleep(0.2)
print("status:", rec["status"])
for key, val in rec.items():
    if key.startswith("result."):
        _, _, data = call("GET", val)
        print(f"  {val} -> {len(data)} bytes")

httpd.shutdown()
service.stop()
