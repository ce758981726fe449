import csv
import io
import json
import logging
import os
import time
import uuid


class ReportStore:
    """Atomic writes of scenario artifacts under ``<base>/<scenario>``."""

    def __init__(self, base_dir, logger=None):
        self.base_dir = base_dir
        self.logger = logger or logging.getLogger(__name__)

    def _ensure_dir(self, subdir):
        path = os.path.join(self.base_dir, subdir) if subdir else self.base_dir
        os.makedirs(path, exist_ok=True)
        return path

    def path(self, subdir, filename):
        return os.path.join(self.base_dir, subdir, filename) if subdir else os.path.join(self.base_dir, filename)

    def target(self, subdir, filename):
        """Path for a file written by another writer; the directory is created."""
        self._ensure_dir(subdir)
        return self.path(subdir, filename)

    def read_json(self, subdir, filename, default=None):
        path = self.path(subdir, filename)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
                if isinstance(payload, dict):
                    return payload
        except FileNotFoundError:
            return default
        except (OSError, json.JSONDecodeError) as exc:
            self.logger.warning("JSON inválido em %s: %s", path, exc)
            return default
        return default

    def write_json(self, subdir, filename, payload, tentativas=6, atraso=0.2):
        text = json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
        return self._write_text(subdir, filename, text, tentativas, atraso)

    def write_csv(self, subdir, filename, header, rows, tentativas=6, atraso=0.2):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row.get(name)) for name in header])
        return self._write_text(subdir, filename, buffer.getvalue(), tentativas, atraso)

    def _write_text(self, subdir, filename, text, tentativas, atraso):
        self._ensure_dir(subdir)
        path = self.path(subdir, filename)
        tmp_path = f"{path}.{uuid.uuid4().hex}.tmp"
        with open(tmp_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())

        ultimo_erro = None
        for tentativa in range(tentativas):
            try:
                os.replace(tmp_path, path)
                return path
            except OSError as exc:
                ultimo_erro = exc
                self.logger.warning(
                    "Falha ao gravar %s (tentativa %s): %s",
                    path,
                    tentativa + 1,
                    exc,
                )
                time.sleep(atraso * (2 ** tentativa))
        self.logger.warning("Não foi possível gravar %s: %s", path, ultimo_erro)
        try:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
        except OSError:
            self.logger.warning("Não foi possível remover tmp %s", tmp_path)
        return None


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return value
