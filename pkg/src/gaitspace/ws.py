"""Minimal WebSocket (RFC 6455) server transport.

Supports the subset the telemetry service needs: HTTP upgrade
handshake, unfragmented text frames, ping/pong, and close. One reader
thread per client; writes are lock-serialized per client so the control
loop and pong replies never interleave bytes.
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct
import threading

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class HandshakeError(Exception):
    pass


def _accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _read_http_request(sock: socket.socket) -> bytes:
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise HandshakeError("connection closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise HandshakeError("oversized handshake request")
    return data


def perform_handshake(sock: socket.socket):
    """Server side of the upgrade; raises HandshakeError on bad requests."""
    request = _read_http_request(sock)
    head = request.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
    if headers.get("upgrade", "").lower() != "websocket":
        raise HandshakeError("not a websocket upgrade request")
    key = headers.get("sec-websocket-key")
    if not key:
        raise HandshakeError("missing Sec-WebSocket-Key")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {_accept_key(key)}\r\n"
        "\r\n"
    )
    sock.sendall(response.encode("ascii"))


def encode_frame(opcode: int, payload: bytes) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 65536:
        head += bytes([126]) + struct.pack("!H", n)
    else:
        head += bytes([127]) + struct.pack("!Q", n)
    return head + payload


def encode_text(message: str) -> bytes:
    return encode_frame(OP_TEXT, message.encode("utf-8"))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    data = b""
    while len(data) < n:
        chunk = sock.recv(n - len(data))
        if not chunk:
            raise ConnectionError("socket closed")
        data += chunk
    return data


def read_frame(sock: socket.socket):
    """Returns (opcode, payload bytes); client frames must be masked."""
    b1, b2 = _recv_exact(sock, 2)
    opcode = b1 & 0x0F
    masked = bool(b2 & 0x80)
    length = b2 & 0x7F
    if length == 126:
        length = struct.unpack("!H", _recv_exact(sock, 2))[0]
    elif length == 127:
        length = struct.unpack("!Q", _recv_exact(sock, 8))[0]
    if length > 1 << 20:
        raise ConnectionError("oversized frame")
    if masked:
        mask = _recv_exact(sock, 4)
        payload = bytearray(_recv_exact(sock, length))
        for i in range(length):
            payload[i] ^= mask[i % 4]
        payload = bytes(payload)
    else:
        payload = _recv_exact(sock, length)
    return opcode, payload


def encode_masked_text(message: str) -> bytes:
    """Client-to-server text frame (masked, as RFC 6455 requires)."""
    payload = bytearray(message.encode("utf-8"))
    mask = os.urandom(4)
    for i in range(len(payload)):
        payload[i] ^= mask[i % 4]
    head = bytes([0x80 | OP_TEXT])
    n = len(payload)
    if n < 126:
        head += bytes([0x80 | n])
    elif n < 65536:
        head += bytes([0x80 | 126]) + struct.pack("!H", n)
    else:
        head += bytes([0x80 | 127]) + struct.pack("!Q", n)
    return head + bytes(mask) + bytes(payload)


class WsConnection:
    """Minimal blocking client connection; enough for tests and tools."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        key = base64.b64encode(os.urandom(16)).decode("ascii")
        request = (
            f"GET / HTTP/1.1\r\n"
            f"Host: {host}:{port}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n"
            "\r\n"
        )
        self.sock.sendall(request.encode("ascii"))
        response = _read_http_request(self.sock)
        head = response.split(b"\r\n", 1)[0].decode("latin-1")
        if "101" not in head:
            raise HandshakeError(f"upgrade refused: {head}")
        expected = _accept_key(key).encode("ascii")
        if expected not in response:
            raise HandshakeError("Sec-WebSocket-Accept mismatch")

    def send_text(self, message: str):
        self.sock.sendall(encode_masked_text(message))

    def recv_text(self) -> str:
        while True:
            opcode, payload = read_frame(self.sock)
            if opcode == OP_TEXT:
                return payload.decode("utf-8", "replace")
            if opcode == OP_CLOSE:
                raise ConnectionError("server closed the connection")

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class WsClient:
    """One connected peer; `send_text` is thread-safe and never blocks the
    caller longer than the kernel buffer write."""

    def __init__(self, sock: socket.socket, address):
        self.sock = sock
        self.address = address
        self._write_lock = threading.Lock()
        self.alive = True

    def send_text(self, message: str):
        self._send(encode_text(message))

    def _send(self, data: bytes):
        with self._write_lock:
            try:
                self.sock.sendall(data)
            except OSError:
                self.close()
                raise

    def close(self):
        if self.alive:
            self.alive = False
            try:
                self.sock.close()
            except OSError:
                pass


class WsServer:
    """Accepts clients and runs a reader loop per connection.

    `on_message(client, text)` runs on the reader thread; `on_connect` /
    `on_disconnect` bracket each client's lifetime.
    """

    def __init__(self, host: str, port: int, on_message,
                 on_connect=None, on_disconnect=None):
        self.on_message = on_message
        self.on_connect = on_connect
        self.on_disconnect = on_disconnect
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(8)
        self.port = self._listener.getsockname()[1]
        self._stopping = False
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    def start(self):
        self._thread.start()

    def stop(self):
        self._stopping = True
        try:
            self._listener.close()
        except OSError:
            pass

    def _accept_loop(self):
        while not self._stopping:
            try:
                sock, address = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_client,
                             args=(sock, address), daemon=True).start()

    def _serve_client(self, sock: socket.socket, address):
        try:
            perform_handshake(sock)
        except (HandshakeError, OSError):
            sock.close()
            return
        client = WsClient(sock, address)
        if self.on_connect:
            self.on_connect(client)
        try:
            while client.alive:
                opcode, payload = read_frame(sock)
                if opcode == OP_CLOSE:
                    try:
                        client._send(encode_frame(OP_CLOSE, payload[:2]))
                    except OSError:
                        pass
                    break
                if opcode == OP_PING:
                    client._send(encode_frame(OP_PONG, payload))
                elif opcode == OP_TEXT:
                    self.on_message(client, payload.decode("utf-8", "replace"))
        except (ConnectionError, OSError):
            pass
        finally:
            client.close()
            if self.on_disconnect:
                self.on_disconnect(client)
