"""Validate CLI metrics and service bodies against the shipped schemas."""

import json
import subprocess
import sys
import tempfile
import urllib.error
import urllib.request
from pathlib import Path

import jsonschema

hpn, schemas = Path(sys.argv[1]), Path(sys.argv[2])
metrics_schema = json.loads((schemas / "metrics.schema.json").read_text())
service_schema = json.loads((schemas / "service.schema.json").read_text())
failures = 0


def check(name, body, schema):
    global failures
    try:
        jsonschema.validate(body, schema)
        print(f"ok    {name}")
    except jsonschema.ValidationError as e:
        failures += 1
        print(f"FAIL  {name}: {e.message}")


def part(name):
    return {"$ref": f"#/$defs/{name}", "$defs": service_schema["$defs"]}


def run(*args):
    subprocess.run([str(hpn), *map(str, args)], check=True, stdout=subprocess.DEVNULL)


def call(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    run("fixture", "icosphere", "--detail", 2, "-o", d / "ico.ply")
    run("build", d / "ico.ply", "-o", d / "t.hpnh", "--resolution-exponent", 3)
    run("train", "--mesh", d / "t.mesh.ply", "--hierarchy", d / "t.hpnh", "-o", d / "m.hpnm", "--iterations", 20)
    files = {"mesh": str(d / "t.mesh.ply"), "hierarchy": str(d / "t.hpnh"), "model": str(d / "m.hpnm")}
    state = ["--mesh", files["mesh"], "--hierarchy", files["hierarchy"], "--model", files["model"]]
    run("eval", *state, "--views", 3, "--samples", 500, "-o", d / "metrics.json")
    check("eval metrics", json.loads((d / "metrics.json").read_text()), metrics_schema)
    # self-evaluation against the decoded colors gives infinite PSNR, written as null
    run("export", *state, "-o", d / "colored.ply")
    run("eval", *state, "--reference", d / "colored.ply", "--views", 2, "--samples", 500, "-o", d / "self.json")
    body = json.loads((d / "self.json").read_text())
    check("eval metrics, exact match", body, metrics_schema)
    if body["psnr"] is not None:
        failures += 1
        print("FAIL  exact match should report psnr null")

    server = subprocess.Popen([str(hpn), "serve", "--port", "0"], stdout=subprocess.PIPE, text=True)
    try:
        line = server.stdout.readline().strip()
        base = line.split()[-1]
        check("create request", files, part("create_request"))
        status, session = call(base, "POST", "/sessions", files)
        assert status == 201, status
        check("POST /sessions", session, part("session"))
        sid = session["id"]
        _, body = call(base, "GET", f"/sessions/{sid}")
        check("GET /sessions/{id}", body, part("session"))
        for level in (1, 2, 3):
            _, body = call(base, "GET", f"/sessions/{sid}/state?level={level}")
            check(f"GET state level {level}", body, part("state"))
        transfer = {"type": "transfer", "level": 2, "source": [0, 1, 2], "target": [5, 6], "k": 2}
        drag = {"type": "drag", "level": 2, "index": 1, "delta": [0.1, 0, 0], "tau": 0.5, "scope": "global"}
        for name, edit in (("transfer", transfer), ("drag", drag)):
            check(f"{name} request", edit, part("edit_request"))
            status, body = call(base, "POST", f"/sessions/{sid}/edits", edit)
            assert status == 200, (status, body)
            check(f"{name} diff", body, part("diff"))
        status, body = call(base, "POST", f"/sessions/{sid}/edits", drag)
        assert status == 409, status
        check("stale error", body, part("error"))
        _, body = call(base, "POST", f"/sessions/{sid}/undo")
        check("undo summary", body, part("session"))
        status, body = call(base, "GET", "/sessions/nope/state")
        assert status == 404, status
        check("unknown session error", body, part("error"))
    finally:
        server.terminate()
        server.wait(timeout=10)

print("schema checks:", "FAIL" if failures else "PASS")
sys.exit(1 if failures else 0)
