"""TCP service mode: the controller actor behind a JSON-lines socket.

A CF identifies itself by the ``sender`` field of the first valid message on
its connection; a bare ``Ack`` with request id ``hello`` is the conventional
greeting. Malformed frames get a ``ProtocolError`` reply and the connection
stays open.
"""
from __future__ import annotations

import asyncio
import logging
from pathlib import Path
from typing import Optional

from .agent import CfState, handle_message
from .controller import Controller
from .errors import CoordinationError, ProtocolError, ValidationError
from .persistence import EventAppender
from .transport import ACK, CONTROLLER, CoordMessage, ack, decode, encode, protocol_error

logger = logging.getLogger(__name__)

HELLO = "hello"


def parse_bind(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep:
        host, port = "127.0.0.1", value
    try:
        port_no = int(port)
    except ValueError:
        raise ValidationError(f"invalid bind address {value!r}") from None
    if not 0 <= port_no <= 65535:
        raise ValidationError(f"port out of range in {value!r}")
    return host or "127.0.0.1", port_no


class ControllerServer:
    """Serves one ``Controller``; inbound messages are applied strictly one at a time."""

    def __init__(self, controller: Controller, host: str = "127.0.0.1", port: int = 0,
                 tick_seconds: float = 0.1, events_path: str | Path | None = None):
        self.controller = controller
        self.host = host
        self.port = port
        self.tick_seconds = tick_seconds
        self._writers: dict[str, asyncio.StreamWriter] = {}
        self._inbox: asyncio.Queue = asyncio.Queue()
        self._server: Optional[asyncio.base_events.Server] = None
        self._tasks: list[asyncio.Task] = []
        self._log = EventAppender(events_path) if events_path is not None else None
        self._stopped = asyncio.Event()

    async def start(self) -> None:
        # OSError (e.g. address in use) propagates to the caller
        self._server = await asyncio.start_server(self._client, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._tasks = [asyncio.create_task(self._actor()), asyncio.create_task(self._clock())]
        self._flush()
        logger.info("controller listening on %s:%d", self.host, self.port)

    async def stop(self) -> None:
        if self._stopped.is_set():
            return
        self._stopped.set()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for task in self._tasks:
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        self.controller.shutdown()
        self._flush()
        for writer in list(self._writers.values()):
            writer.close()
        if self._log is not None:
            self._log.close()

    async def wait_stopped(self) -> None:
        await self._stopped.wait()

    def _flush(self) -> None:
        if self._log is not None:
            self._log.extend(self.controller.events)

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        bound: Optional[str] = None
        try:
            while not reader.at_eof():
                line = await reader.readline()
                if not line:
                    break
                try:
                    msg = decode(line)
                except (ProtocolError, ValidationError) as exc:
                    writer.write(encode(protocol_error(CONTROLLER, str(exc))))
                    await writer.drain()
                    continue
                if bound is None:
                    bound = msg.sender
                    self._writers[bound] = writer
                elif msg.sender != bound:
                    writer.write(encode(protocol_error(CONTROLLER, f"connection is bound to {bound!r}")))
                    await writer.drain()
                    continue
                if msg.kind == ACK and msg.request_id == HELLO:
                    continue
                await self._inbox.put(msg)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if bound is not None and self._writers.get(bound) is writer:
                del self._writers[bound]
            writer.close()

    async def _actor(self) -> None:
        while True:
            msg = await self._inbox.get()
            try:
                out = self.controller.handle(msg)
            except CoordinationError as exc:
                logger.warning("rejected %s from %s: %s", msg.kind, msg.sender, exc)
                out = []
            await self._send(out)
            self._flush()

    async def _clock(self) -> None:
        while True:
            await asyncio.sleep(self.tick_seconds)
            out = self.controller.tick(self.controller.now + 1)
            await self._send(out)
            self._flush()

    async def _send(self, out) -> None:
        for recipient, msg in out:
            writer = self._writers.get(recipient)
            if writer is None:
                logger.info("no connection for %s, dropping %s", recipient, msg.kind)
                continue
            writer.write(encode(msg))
            try:
                await writer.drain()
            except ConnectionError:
                self._writers.pop(recipient, None)


class CfClient:
    """Network-side CF: answers info requests from a local ``CfState``."""

    def __init__(self, state: CfState):
        self.state = state
        self.received: list[CoordMessage] = []
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None

    async def connect(self, host: str, port: int) -> None:
        self._reader, self._writer = await asyncio.open_connection(host, port)
        await self.send(ack(self.state.cf_id, HELLO, HELLO))

    async def send(self, msg: CoordMessage) -> None:
        self._writer.write(encode(msg))
        await self._writer.drain()

    async def send_raw(self, data: bytes) -> None:
        self._writer.write(data)
        await self._writer.drain()

    async def receive(self) -> CoordMessage:
        line = await self._reader.readline()
        if not line:
            raise ConnectionError("controller closed the connection")
        msg = decode(line)
        self.received.append(msg)
        return msg

    async def serve_once(self) -> CoordMessage:
        """Receive one message and reply to it as the CF would."""
        msg = await self.receive()
        reply = handle_message(self.state, msg)
        if reply is not None:
            await self.send(reply)
        return msg

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except ConnectionError:
                pass
