"""Independent cache-key oracle. Regenerate with: python3 cache_key_oracle.py > cache_key_golden.inc"""
import hashlib


def field(name, value):
    b = value.encode("utf-8")
    return name.encode() + b":" + str(len(b)).encode() + b":" + b + b"\n"


def canonical(model, temperature, max_tokens, salt, messages):
    out = b"whai.completion.v1\n"
    out += field("model", model)
    out += field("temperature", "%.6f" % temperature)
    out += field("max_tokens", str(max_tokens))
    out += field("salt", str(salt))
    out += field("messages", str(len(messages)))
    for role, content in messages:
        out += field("role", role)
        out += field("content", content)
    return out


CASES = [
    ("gpt-4o", 0.0, 6000, 0, [("system", "You are a pediatrician."), ("user", "She won't eat.")]),
    ("gpt-4o", 0.7, 2000, 3, [("system", "s"), ("user", "u"), ("assistant", "a"), ("user", "u2")]),
    ("gpt-4o-mini", 1.25, 1, 18446744073709551615, [("user", "")]),
    ("m", 0.1, 10, 7, [("user", "café – über\nline two:3:x")]),
    ("", 0.0, 0, 0, []),
    ("gpt-4o", 0.0, 6000, 0, [("user", "ab"), ("user", "c")]),
    ("gpt-4o", 0.0, 6000, 0, [("user", "a"), ("user", "bc")]),
]


def cxx(s):
    return "R\"ORACLE(" + s + ")ORACLE\""


if __name__ == "__main__":
    print("// Generated by cache_key_oracle.py; do not edit.")
    for model, t, mt, salt, msgs in CASES:
        digest = hashlib.sha256(canonical(model, t, mt, salt, msgs)).hexdigest()
        items = ", ".join("{%s, %s}" % (cxx(r), cxx(c)) for r, c in msgs)
        print("{%s, %r, %d, %duLL, {%s}, \"%s\"}," % (cxx(model), t, mt, salt, items, digest))
