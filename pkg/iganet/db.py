from __future__ import annotations

import time
from typing import Any, Dict, List, Optional

import aiosqlite

import logging

logger = logging.getLogger(__name__)


class Database:
    """Index of cached EFIE systems and a log of finished runs."""

    def __init__(self, path: str):
        self._path = path
        self._conn: Optional[aiosqlite.Connection] = None

    async def connect(self):
        if self._conn is None:
            self._conn = await aiosqlite.connect(self._path)
            logger.info("Connected to SQLite DB at %s", self._path)
            await self._conn.execute("PRAGMA journal_mode = WAL")
            await self._conn.execute("PRAGMA synchronous = NORMAL")
            await self._conn.commit()

    async def init_db(self):
        await self.connect()
        await self._conn.execute(
            """
            CREATE TABLE IF NOT EXISTS systems (
                cache_key TEXT PRIMARY KEY,
                geometry_hash TEXT NOT NULL,
                num_dofs INTEGER NOT NULL,
                kappa REAL NOT NULL,
                path TEXT NOT NULL,
                created_at INTEGER NOT NULL
            )
            """
        )
        await self._conn.commit()
        await self._conn.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                command TEXT NOT NULL,
                config_hash TEXT NOT NULL,
                num_dofs INTEGER,
                delta_max REAL,
                loss REAL,
                created_at INTEGER NOT NULL
            )
            """
        )
        await self._conn.commit()

    async def register_system(
        self, cache_key: str, geometry_hash: str, num_dofs: int, kappa: float, path: str
    ):
        logger.debug("Registering system %s (%d DOFs) at %s", cache_key, num_dofs, path)
        await self.connect()
        await self._conn.execute(
            """
            INSERT INTO systems(cache_key, geometry_hash, num_dofs, kappa, path, created_at)
            VALUES (?, ?, ?, ?, ?, ?)
            ON CONFLICT(cache_key) DO UPDATE SET
                geometry_hash=excluded.geometry_hash,
                num_dofs=excluded.num_dofs,
                kappa=excluded.kappa,
                path=excluded.path,
                created_at=excluded.created_at
            """,
            (cache_key, geometry_hash, num_dofs, kappa, path, int(time.time())),
        )
        await self._conn.commit()

    async def get_system(self, cache_key: str) -> Optional[Dict[str, Any]]:
        await self.connect()
        cursor = await self._conn.execute(
            """
            SELECT cache_key, geometry_hash, num_dofs, kappa, path, created_at
            FROM systems
            WHERE cache_key = ?
            """,
            (cache_key,),
        )
        row = await cursor.fetchone()
        await cursor.close()
        if row is None:
            return None

        cache_key, geometry_hash, num_dofs, kappa, path, created_at = row
        return {
            "cache_key": cache_key,
            "geometry_hash": geometry_hash,
            "num_dofs": num_dofs,
            "kappa": kappa,
            "path": path,
            "created_at": created_at,
        }

    async def forget_system(self, cache_key: str):
        logger.info("Dropping stale cache entry %s", cache_key)
        await self.connect()
        await self._conn.execute("DELETE FROM systems WHERE cache_key = ?", (cache_key,))
        await self._conn.commit()

    async def count_systems(self) -> int:
        await self.connect()
        cursor = await self._conn.execute("SELECT COUNT(*) FROM systems")
        row = await cursor.fetchone()
        await cursor.close()
        return int(row[0])

    async def record_run(
        self,
        command: str,
        config_hash: str,
        num_dofs: Optional[int] = None,
        delta_max: Optional[float] = None,
        loss: Optional[float] = None,
    ) -> int:
        logger.info(
            "Recording run command=%s config=%s dofs=%s delta_max=%s loss=%s",
            command, config_hash, num_dofs, delta_max, loss,
        )
        await self.connect()
        cursor = await self._conn.execute(
            """
            INSERT INTO runs(command, config_hash, num_dofs, delta_max, loss, created_at)
            VALUES (?, ?, ?, ?, ?, ?)
            """,
            (command, config_hash, num_dofs, delta_max, loss, int(time.time())),
        )
        run_id = cursor.lastrowid
        await cursor.close()
        await self._conn.commit()
        return int(run_id)

    async def get_runs(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        await self.connect()
        if command is None:
            cursor = await self._conn.execute(
                "SELECT id, command, config_hash, num_dofs, delta_max, loss, created_at FROM runs ORDER BY id"
            )
        else:
            cursor = await self._conn.execute(
                """
                SELECT id, command, config_hash, num_dofs, delta_max, loss, created_at
                FROM runs
                WHERE command = ?
                ORDER BY id
                """,
                (command,),
            )
        rows = await cursor.fetchall()
        await cursor.close()

        runs = []
        for row in rows:
            run_id, command_name, config_hash, num_dofs, delta_max, loss, created_at = row
            runs.append(
                {
                    "id": run_id,
                    "command": command_name,
                    "config_hash": config_hash,
                    "num_dofs": num_dofs,
                    "delta_max": delta_max,
                    "loss": loss,
                    "created_at": created_at,
                }
            )
        return runs

    async def close(self):
        if self._conn is not None:
            await self._conn.close()
            self._conn = None
