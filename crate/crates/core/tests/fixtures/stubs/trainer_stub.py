"""Trainer-runner stub speaking the define/run protocol.

The defined function is called with the run arguments and must return a
number, used as the validation loss. Train losses decay towards it.
"""
import inspect
import json
import sys

PRIMITIVE = {float: "float", int: "int", bool: "bool", str: "str"}
namespace = None


def reply(obj):
    print(json.dumps(obj), flush=True)


for line in sys.stdin:
    try:
        req = json.loads(line)
    except ValueError as e:
        reply({"type": "error", "stage": "protocol", "message": str(e)})
        continue
    kind = req.get("type")
    if kind == "ping":
        reply({"type": "pong"})
    elif kind == "define":
        namespace = None
        try:
            code = compile(req["code"], "<generated>", "exec")
        except SyntaxError as e:
            reply({"type": "error", "stage": "parse", "message": "%s: %s (line %s)" % (type(e).__name__, e.msg, e.lineno)})
            continue
        ns = {}
        try:
            exec(code, ns)
        except Exception as e:
            reply({"type": "error", "stage": "parse", "message": "%s: %s" % (type(e).__name__, e)})
            continue
        fn = ns.get("make_model_and_optimizer")
        if fn is None:
            reply({"type": "error", "stage": "signature", "message": "make_model_and_optimizer is not defined"})
            continue
        specs = []
        bad = None
        for p in inspect.signature(fn).parameters.values():
            if p.annotation not in PRIMITIVE:
                bad = p.name
                break
            spec = {"name": p.name, "type": PRIMITIVE[p.annotation]}
            if p.default is not inspect.Parameter.empty:
                spec["default"] = p.default
            specs.append(spec)
        if bad is not None:
            reply({"type": "error", "stage": "signature", "message": "non-primitive argument %s" % bad})
            continue
        namespace = ns
        reply({"type": "defined", "arg_specs": specs})
    elif kind == "run":
        if namespace is None:
            reply({"type": "error", "stage": "runtime", "message": "no code defined"})
            continue
        try:
            val = float(namespace["make_model_and_optimizer"](**req.get("arguments", {})))
        except Exception as e:
            reply({"type": "error", "stage": "runtime", "message": "%s: %s" % (type(e).__name__, e)})
            continue
        epochs = int(req.get("epochs", 10))
        reply({"type": "result", "train_losses": [val + (epochs - i) * 0.1 for i in range(epochs)], "val_loss": val})
    else:
        reply({"type": "error", "stage": "protocol", "message": "unknown request type %r" % kind})
