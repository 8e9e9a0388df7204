#!/usr/bin/env python3
"""Independent reference implementation of the wire-level primitives.

Computes golden vectors for the test crypto provider (splitmix64 keystream,
FNV-1a digests), the 512-byte cell layout, onion layering, and two
hand-encoded bytecode programs. Written before and kept independent of the
C++ implementation; the output file is committed under tests/golden/.
"""

import json
import os
import sys

MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes, state: int = FNV_OFFSET) -> int:
    for b in data:
        state = ((state ^ b) * FNV_PRIME) & MASK64
    return state


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def keystream(seed: int, cell_counter: int, nbytes: int) -> bytes:
    out = b""
    j = 0
    while len(out) < nbytes:
        block = splitmix64((seed + cell_counter * 64 + j) & MASK64)
        out += block.to_bytes(8, "little")
        j += 1
    return out[:nbytes]


def stream_seed(key: bytes, forward: bool) -> int:
    return fnv1a64(key + (b"\x01" if forward else b"\x00"))


def stream_xor(key: bytes, forward: bool, cell_counter: int, buf: bytes) -> bytes:
    ks = keystream(stream_seed(key, forward), cell_counter, len(buf))
    return bytes(a ^ b for a, b in zip(buf, ks))


def seal(relay_id: bytes, pt: bytes) -> bytes:
    seed = fnv1a64(b"seal" + relay_id)
    ks = keystream(seed, 0, len(pt))
    return bytes(a ^ b for a, b in zip(pt, ks))


def encode_cell(circ_id: int, command: int, payload: bytes) -> bytes:
    assert len(payload) == 507
    return circ_id.to_bytes(4, "little") + bytes([command]) + payload


def encode_relay_payload(relay_cmd, recognized, stream_id, digest, length, data):
    assert len(data) <= 496
    data = data + b"\x00" * (496 - len(data))
    return (
        bytes([relay_cmd])
        + recognized.to_bytes(2, "little")
        + stream_id.to_bytes(2, "little")
        + digest.to_bytes(4, "little")
        + length.to_bytes(2, "little")
        + data
    )


def payload_digest(payload507: bytes, state: int) -> int:
    zeroed = payload507[:5] + b"\x00\x00\x00\x00" + payload507[9:]
    return fnv1a64(zeroed, state)


# Bytecode encoding: opcode u8 | dst low nibble, src high nibble | offset s16 LE | imm s32 LE
def insn(opcode, dst=0, src=0, offset=0, imm=0):
    return (
        bytes([opcode, (src << 4) | dst])
        + (offset & 0xFFFF).to_bytes(2, "little")
        + (imm & 0xFFFFFFFF).to_bytes(4, "little")
    )


OP_EXIT, OP_MOVI, OP_MOV, OP_ADD = 0x00, 0x1B, 0x2B, 0x20


def main():
    out = {}

    out["fnv1a64"] = [
        {"input_hex": "", "state": hex(fnv1a64(b""))},
        {"input_hex": "61", "state": hex(fnv1a64(b"a"))},
        {"input_hex": "666f6f626172", "state": hex(fnv1a64(b"foobar"))},
        {"input_hex": "00" * 32, "state": hex(fnv1a64(b"\x00" * 32))},
    ]

    out["splitmix64"] = [
        {"x": "0x0", "v": hex(splitmix64(0))},
        {"x": "0x1", "v": hex(splitmix64(1))},
        {"x": hex(FNV_OFFSET), "v": hex(splitmix64(FNV_OFFSET))},
        {"x": "0xdeadbeefcafebabe", "v": hex(splitmix64(0xDEADBEEFCAFEBABE))},
    ]

    zero_key = b"\x00" * 32
    out["stream"] = {
        "zero_key_fwd_seed": hex(stream_seed(zero_key, True)),
        "zero_key_bwd_seed": hex(stream_seed(zero_key, False)),
        "zero_key_fwd_ctr0_first16_hex": keystream(
            stream_seed(zero_key, True), 0, 16
        ).hex(),
        "zero_key_fwd_ctr1_first16_hex": keystream(
            stream_seed(zero_key, True), 1, 16
        ).hex(),
    }

    cell = encode_cell(1, 3, b"\x00" * 507)
    out["cell_circ1_relay_zero_payload_sha_prefix_hex"] = cell[:8].hex()
    out["cell_circ1_relay_zero_payload_hex"] = cell.hex()

    # Relay payload: cmd=1 DATA, stream 7, data "hello", digest over fresh state
    data = b"hello"
    p = encode_relay_payload(1, 0, 7, 0, len(data), data)
    dstate = payload_digest(p, FNV_OFFSET)
    p = encode_relay_payload(1, 0, 7, dstate & 0xFFFFFFFF, len(data), data)
    out["relay_payload_hello"] = {
        "digest_state": hex(dstate),
        "digest_field": hex(dstate & 0xFFFFFFFF),
        "first32_hex": p[:32].hex(),
    }

    # Single-hop onion wrap of that payload, zero key, fwd, counter 0
    wrapped = stream_xor(zero_key, True, 0, p)
    out["onion_1hop_zero_key"] = {
        "first8_hex": wrapped[:8].hex(),
        "full_fnv": hex(fnv1a64(wrapped)),
    }

    # Three-hop wrap: keys 0x01*32, 0x02*32, 0x03*32, counters 0, innermost = hop3
    keys = [bytes([i]) * 32 for i in (1, 2, 3)]
    buf = p
    for k in reversed(keys):
        buf = stream_xor(k, True, 0, buf)
    out["onion_3hop"] = {"first8_hex": buf[:8].hex(), "full_fnv": hex(fnv1a64(buf))}

    out["seal"] = {
        "relay_id_hex": "aa" * 16,
        "pt_hex": (b"\x11" * 32).hex(),
        "ct_hex": seal(b"\xaa" * 16, b"\x11" * 32).hex(),
    }

    prog1 = insn(OP_MOVI, dst=0, imm=42) + insn(OP_EXIT)
    prog2 = (
        insn(OP_MOVI, dst=1, imm=2)
        + insn(OP_MOVI, dst=2, imm=3)
        + insn(OP_MOV, dst=0, src=1)
        + insn(OP_ADD, dst=0, src=2)
        + insn(OP_EXIT)
    )
    out["programs"] = {
        "movi42_hex": prog1.hex(),
        "movi42_result": 42,
        "add_hex": prog2.hex(),
        "add_result": 5,
    }

    dest = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        os.path.dirname(__file__), "..", "tests", "golden", "vectors.json"
    )
    os.makedirs(os.path.dirname(dest), exist_ok=True)
    with open(dest, "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")
    print("wrote", dest)


if __name__ == "__main__":
    main()
