"""TCP co-simulation master: handshake, lockstep barrier, frame broadcast.

Transport is newline-delimited JSON over TCP. Each connected client runs
one reader thread feeding an inbox queue; all state merging happens in the
single tick loop. A client that misses the barrier timeout is marked
lagging for that frame and its objects fall back to kernel models; the
master never stalls.
"""

import queue
import socket
import threading
import time
from dataclasses import dataclass, field

from taftwin import PROTOCOL_VERSION
from taftwin.core.types import ParticipantState
from taftwin.cosim.kernel import SimulationKernel
from taftwin.cosim.protocol import (
    FrameMessage,
    MalformedMessage,
    MessageKind,
    decode_message,
    encode_message,
)
from taftwin.cosim.recording import RecordedFrame


@dataclass
class _Client:
    client_id: str
    conn: socket.socket
    inbox: "queue.Queue[FrameMessage]" = field(default_factory=queue.Queue)
    lockstep: bool = True
    alive: bool = True
    lagging: bool = False

    def send(self, msg: FrameMessage) -> None:
        try:
            self.conn.sendall(encode_message(msg))
        except OSError:
            self.alive = False


class CosimServer:
    """Runs a kernel as a lockstep master on a TCP port."""

    def __init__(
        self,
        kernel: SimulationKernel,
        port: int,
        host: str = "127.0.0.1",
        barrier_timeout_s: float = 0.2,
        realtime: bool = False,
    ):
        self.kernel = kernel
        self.host = host
        self.port = port
        self.barrier_timeout_s = barrier_timeout_s
        self.realtime = realtime
        self.frames: list[RecordedFrame] = [kernel.last_frame.to_recorded()]
        self._clients: dict[str, _Client] = {}
        self._clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._listener: socket.socket | None = None
        self._next_client_no = 1

    # -- lifecycle ---------------------------------------------------------

    def start_listening(self) -> int:
        """Bind and start the accept thread; returns the bound port."""
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen()
        listener.settimeout(0.2)
        self._listener = listener
        self.port = listener.getsockname()[1]
        threading.Thread(target=self._accept_loop, daemon=True).start()
        return self.port

    def stop(self) -> None:
        self._stop.set()
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            try:
                client.send(FrameMessage(kind=MessageKind.BYE))
                client.conn.close()
            except OSError:
                pass
        if self._listener is not None:
            self._listener.close()

    # -- accept / handshake --------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                conn, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._handshake, args=(conn,), daemon=True).start()

    def _handshake(self, conn: socket.socket) -> None:
        reader = conn.makefile("rb")
        try:
            line = reader.readline()
            hello = decode_message(line)
        except (MalformedMessage, OSError):
            conn.close()
            return
        if hello.kind is not MessageKind.HELLO:
            conn.close()
            return
        version = hello.control.get("version")
        if version != PROTOCOL_VERSION:
            try:
                conn.sendall(
                    encode_message(
                        FrameMessage(
                            kind=MessageKind.CONTROL,
                            control={
                                "error": "version_mismatch",
                                "expected": PROTOCOL_VERSION,
                                "got": version,
                            },
                        )
                    )
                )
            except OSError:
                pass
            conn.close()
            return

        client_id = hello.client_id or f"client-{self._next_client_no}"
        with self._clients_lock:
            if client_id in self._clients:
                client_id = f"{client_id}-{self._next_client_no}"
            self._next_client_no += 1
            client = _Client(
                client_id=client_id,
                conn=conn,
                lockstep=bool(hello.control.get("lockstep", True)),
            )
            self._clients[client_id] = client

        granted: list[int] = []
        for pid in hello.control.get("claims", []):
            if self.kernel.claim(client_id, int(pid)):
                granted.append(int(pid))
        spawned: list[int] = []
        for raw in hello.control.get("spawn", []):
            raw = dict(raw)
            raw.setdefault("id", 0)
            raw.setdefault("timestamp", self.kernel.sim_time)
            state = ParticipantState.from_dict(raw)
            spawned.append(self.kernel.spawn_external(client_id, state).id)

        client.send(
            FrameMessage(
                kind=MessageKind.WELCOME,
                frame_no=self.kernel.frame_no,
                sim_time=self.kernel.sim_time,
                client_id=client_id,
                control={
                    "version": PROTOCOL_VERSION,
                    "dt": self.kernel.dt,
                    "granted_ids": granted,
                    "spawned_ids": spawned,
                },
            )
        )
        threading.Thread(target=self._reader_loop, args=(client, reader), daemon=True).start()

    def _reader_loop(self, client: _Client, reader) -> None:
        while not self._stop.is_set() and client.alive:
            try:
                line = reader.readline()
            except OSError:
                break
            if not line:
                break
            try:
                msg = decode_message(line)
            except MalformedMessage:
                # Malformed traffic disconnects this client only.
                break
            if msg.kind is MessageKind.BYE:
                break
            client.inbox.put(msg)
        client.alive = False
        self.kernel.release(client.client_id)
        with self._clients_lock:
            self._clients.pop(client.client_id, None)
        try:
            client.conn.close()
        except OSError:
            pass

    # -- lockstep ----------------------------------------------------------------

    def barrier_wait(
        self, clients: list[_Client], timeout_s: float, frame_no: int
    ) -> tuple[set[str], list[FrameMessage]]:
        """Block until every lockstep client answered the frame or timeout.

        Returns (responding client ids, collected UPDATE messages). Clients
        that stay silent are marked lagging for this frame.
        """
        pending = {c.client_id: c for c in clients if c.lockstep and c.alive}
        responded: set[str] = set()
        updates: list[FrameMessage] = []
        deadline = time.monotonic() + timeout_s
        while pending and time.monotonic() < deadline:
            for client_id, client in list(pending.items()):
                if not client.alive:
                    del pending[client_id]
                    continue
                try:
                    msg = client.inbox.get_nowait()
                except queue.Empty:
                    continue
                if msg.kind is MessageKind.UPDATE:
                    updates.append(msg)
                    if msg.frame_no == frame_no:
                        responded.add(client_id)
                        del pending[client_id]
                elif msg.kind is MessageKind.ACK and msg.frame_no == frame_no:
                    responded.add(client_id)
                    del pending[client_id]
            if pending:
                time.sleep(0.001)
        for client in pending.values():
            client.lagging = True
        for client_id in responded:
            client = self._clients.get(client_id)
            if client:
                client.lagging = False
        return responded, updates

    # -- main loop ------------------------------------------------------------------

    def run(self, max_frames: int | None = None) -> None:
        """Tick until the configured duration (or max_frames) elapses."""
        total = int(round(self.kernel.config.duration / self.kernel.dt))
        if max_frames is not None:
            total = min(total, max_frames)
        for _ in range(total):
            if self._stop.is_set():
                break
            frame_no = self.kernel.frame_no
            frame_msg = self.kernel.last_frame.to_message()
            with self._clients_lock:
                clients = list(self._clients.values())
            for client in clients:
                client.send(frame_msg)
            _responded, updates = self.barrier_wait(
                clients, self.barrier_timeout_s, frame_no
            )
            start = time.monotonic()
            state = self.kernel.tick(updates)
            self.frames.append(state.to_recorded())
            if self.realtime:
                elapsed = time.monotonic() - start
                time.sleep(max(0.0, self.kernel.dt - elapsed))
        # Final broadcast so clients see the last state before BYE.
        final = self.kernel.last_frame.to_message()
        with self._clients_lock:
            clients = list(self._clients.values())
        for client in clients:
            client.send(final)
        self.kernel._flush_remaining_lost_time()
