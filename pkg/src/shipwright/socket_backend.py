"""Worker server and coordinator-side client speaking the framed protocol over TCP.

Payloads match the in-process backend byte for byte; timing still comes from
the virtual-time model, never from the socket.
"""

from __future__ import annotations

import logging
import socket
import threading
from typing import Optional, Sequence

from .errors import PeerClosed, ProtocolError, RangeFault
from .execution import Query
from .relation import ClusterLayout
from .sampling import Method, SampleSpec
from .transport import (
    DsReadReq,
    DsReadResp,
    FsResult,
    LinkModel,
    QueryDispatch,
    TransferStats,
    recv_message,
    send_message,
)

log = logging.getLogger(__name__)

METHOD_CODES = {Method.NONE: 0, Method.BERNOULLI: 1, Method.CLUSTER: 2}
METHODS_BY_CODE = {v: k for k, v in METHOD_CODES.items()}


def dispatch_message(query: Query, core_budget: int, cluster_size: int) -> QueryDispatch:
    s = query.sample
    return QueryDispatch(query.id, METHOD_CODES[s.method], s.rate, s.seed,
                         query.scale_estimates, core_budget, cluster_size)


def query_from_message(msg: QueryDispatch) -> Query:
    try:
        method = METHODS_BY_CODE[msg.method]
    except KeyError:
        raise ProtocolError(f"unknown sampling method code {msg.method}") from None
    return Query(msg.query_id, SampleSpec(method, msg.rate, msg.seed), msg.scale_estimates)


class WorkerServer:
    """Serves one worker's partition on 127.0.0.1; one thread per connection."""

    def __init__(self, worker, host: str = "127.0.0.1", port: int = 0):
        self.worker = worker
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._closed = threading.Event()
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def _accept_loop(self):
        while not self._closed.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            threading.Thread(target=self._serve, args=(conn,), daemon=True).start()

    def _serve(self, conn: socket.socket):
        with conn:
            while True:
                try:
                    msg = recv_message(conn)
                except PeerClosed:
                    return
                except ProtocolError as exc:
                    log.warning("worker %d dropping connection: %s", self.worker.node_id, exc)
                    return
                try:
                    reply = self._handle(msg)
                except (ProtocolError, RangeFault) as exc:
                    log.warning("worker %d aborting connection: %s", self.worker.node_id, exc)
                    return
                send_message(conn, reply)

    def _handle(self, msg):
        if isinstance(msg, QueryDispatch):
            query = query_from_message(msg)
            layout = self.worker.layout
            if msg.cluster_size != layout.cluster_size:
                layout = ClusterLayout(layout.row_count, msg.cluster_size)
            return FsResult(self.worker.execute(query, msg.core_budget, layout))
        if isinstance(msg, DsReadReq):
            self.worker.region.check(msg.offset, msg.length)
            return DsReadResp(self.worker.region.content[msg.offset : msg.offset + msg.length])
        raise ProtocolError(f"worker cannot handle {type(msg).__name__}")

    def close(self):
        self._closed.set()
        self._listener.close()


class SocketEndpoint:
    """Coordinator's connection to one worker; one request in flight at a time."""

    def __init__(self, address, cluster_size: int, server: Optional[WorkerServer] = None):
        self._sock = socket.create_connection(address)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.cluster_size = cluster_size
        self._server = server

    def run_query(self, query: Query, core_budget: int) -> bytes:
        send_message(self._sock, dispatch_message(query, core_budget, self.cluster_size))
        reply = recv_message(self._sock)
        if not isinstance(reply, FsResult):
            raise ProtocolError(f"expected FS_RESULT, got {reply.type.name}")
        return reply.wire

    def read(self, ranges: Sequence[tuple[int, int]], link: LinkModel):
        chunks = []
        for offset, length in ranges:
            send_message(self._sock, DsReadReq(offset, length))
            reply = recv_message(self._sock)
            if not isinstance(reply, DsReadResp):
                raise ProtocolError(f"expected DS_READ_RESP, got {reply.type.name}")
            if len(reply.data) != length:
                raise ProtocolError(f"short read: asked {length}, got {len(reply.data)}")
            chunks.append(reply.data)
        total = sum(n for _, n in ranges)
        return chunks, TransferStats(total, link.transfer_time(total))

    def close(self):
        self._sock.close()
        if self._server is not None:
            self._server.close()
