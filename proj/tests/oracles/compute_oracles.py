"""Independent reference values frozen into the C++ tests.

Bitwise CRC-16/CCITT-FALSE and an iterated SHA-256 verifier built from
hashlib; neither shares code with the C++ implementation.
"""
import hashlib
import struct


def crc16_ccitt_false(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
    return crc


def kdf(uid: bytes, passcode: str, iterations: int = 10000) -> bytes:
    state = bytes(32)
    for i in range(iterations):
        state = hashlib.sha256(state + uid + passcode.encode() + struct.pack("<I", i)).digest()
    return state


if __name__ == "__main__":
    print("check 123456789:", hex(crc16_ccitt_false(b"123456789")))
    print("erased desk-small page (1088):", hex(crc16_ccitt_false(b"\xff" * 1088)))
    print("erased iphone5c page (16448):", hex(crc16_ccitt_false(b"\xff" * 16448)))
    print("empty:", hex(crc16_ccitt_false(b"")))
    uid = bytes(range(32))
    print("kdf(0..31, '1234'):", kdf(uid, "1234").hex())
    print("kdf(0..31, ''):", kdf(uid, "").hex())

    # Sector index record for lpn 0x20, seq 5, flags valid|counter.
    head = struct.pack("<IIB", 0x20, 5, 0x03) + bytes(5)
    print("index(0x20, 5, 0x03):", (head + struct.pack("<H", crc16_ccitt_false(head))).hex())
    # Attack arithmetic: 2-digit space, planted 73, six attempts per cycle.
    cycles = -(-(73 + 1) // 6)
    print("cycles for 73:", cycles, "elapsed:", cycles * 90)
    print("estimates:", -(-10**4 // 6) * 45, -(-10**4 // 6) * 90, -(-10**6 // 6) * 45)
    print("wear:", -(-10**4 // 6), -(-10**6 // 6), -(-100 // 6))
