from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CORPUS = Path(__file__).parent / "corpus"
GOLDEN = Path(__file__).parent / "golden"


def write_tree(root: Path, files: dict[str, str | bytes]) -> Path:
    for rel, content in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content, encoding="utf-8")
    return root


def fixture_repo_files() -> dict[str, str | bytes]:
    """~20 files, three languages, one oversized file and one binary."""
    files: dict[str, str | bytes] = {
        "README.md": "# Shop\n\nA tiny web shop used as a documentation fixture.\n",
        "Dockerfile": "FROM python:3.11-slim\n# app image\nCOPY . /app\nRUN pip install -r /app/requirements.txt\nCMD [\"python\", \"-m\", \"shop\"]\n",
        "docker-compose.yml": "services:\n  api:\n    build: .  # local image\n    ports: [\"8000:8000\"]\n  db:\n    image: postgres:16\n",
        "requirements.txt": "flask==3.0.0\npsycopg[binary]==3.1.18\n",
        "package.json": '{\n  "name": "shop-web",\n  "scripts": {"build": "node build.js"}\n}\n',
        "src/shop/__init__.py": '"""Shop package."""\n',
        "src/shop/__main__.py": "from .app import create_app\n\ncreate_app().run()  # dev server\n",
        "src/shop/app.py": "from flask import Flask\nfrom .routes import register\n\n\ndef create_app():\n    app = Flask(__name__)  # the WSGI app\n    register(app)\n    return app\n",
        "src/shop/routes.py": "from .orders import list_orders\n\n\ndef register(app):\n    app.add_url_rule('/orders', view_func=list_orders)\n",
        "src/shop/orders.py": "# order handling\nfrom .db import fetch\n\n\ndef list_orders():\n    return fetch('SELECT * FROM orders')  # '#' inside a string stays\n",
        "src/shop/db.py": "import os\n\nDSN = os.environ.get('DSN', 'postgresql://db/shop')\n\n\ndef fetch(sql):\n    return []\n",
        "src/shop/config.py": "DEBUG = False  # override in tests\n",
        "tests/test_orders.py": "from shop.orders import list_orders\n\n\ndef test_empty():\n    assert list_orders() == []\n",
        "web/index.js": "// entry point\nimport { render } from './view.js';\nrender(document.body); /* mount */\n",
        "web/view.js": "export function render(el) {\n  el.innerHTML = '<h1>Shop</h1>'; // title\n}\n",
        "web/api.js": "const BASE = 'http://localhost:8000'; // dev\nexport const orders = () => fetch(`${BASE}/orders`);\n",
        "web/build.js": "/* build script */\nconsole.log('build');\n",
        "db/schema.sql": "-- orders table\nCREATE TABLE orders (id SERIAL PRIMARY KEY, total NUMERIC);\n",
        "db/seed.sql": "INSERT INTO orders (total) VALUES (10); -- demo row\n",
        "data/huge.log": "x" * (600 * 1024),
        "assets/logo.bin": bytes([0x89, 0x50, 0x4E, 0x47, 0xFF, 0xFE, 0x00, 0x01]) * 64,
        ".git/HEAD": "ref: refs/heads/main\n",
    }
    return files


@pytest.fixture
def fixture_repo(tmp_path: Path) -> Path:
    return write_tree(tmp_path / "shop", fixture_repo_files())


ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []  # (criterion, PASS|FAIL|SKIP, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status}  {name}  {detail}")
