import json
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

from altgen.dataset import load_rico_screen
from altgen.genai.client import BackendConfig, ChatClient, ResultCache
from altgen.mock import MockBackend

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
GOLDEN = HERE / "golden"

PLAYER_LAYOUT = """<?xml version="1.0" encoding="utf-8"?>
<LinearLayout xmlns:android="http://schemas.android.com/apk/res/android"
    android:id="@+id/toggle_layout"
    android:layout_width="match_parent"
    android:layout_height="wrap_content"
    android:orientation="horizontal">

    <TextView
        android:id="@+id/title"
        android:text="Morning meditation" />

    <ImageButton
        android:id="@+id/rewind_button"
        android:layout_width="48dp"
        android:layout_height="48dp"
        android:src="@drawable/ic_rewind" />

    <ImageButton android:id="@+id/play_button" android:src="@drawable/ic_play"/>

    <ImageView
        android:id="@+id/cover_art"
        android:src="@drawable/ic_cover" />
</LinearLayout>
"""


@pytest.fixture
def rewind_screen():
    doc = json.loads((FIXTURES / "rewind_screen.json").read_text())
    return load_rico_screen(doc, "rewind")


def icon_png(color=(20, 20, 20), size=(48, 48)) -> Image.Image:
    img = Image.new("RGBA", size, (255, 255, 255, 255))
    d = ImageDraw.Draw(img)
    d.polygon([(8, 24), (24, 10), (24, 38)], fill=color)
    d.polygon([(24, 24), (40, 10), (40, 38)], fill=color)
    return img


def make_project(root: Path, layout: str = PLAYER_LAYOUT, name: str = "activity_player.xml",
                 drawables=("ic_rewind", "ic_play")) -> Path:
    layout_dir = root / "res" / "layout"
    layout_dir.mkdir(parents=True, exist_ok=True)
    (root / "res" / "drawable").mkdir(parents=True, exist_ok=True)
    for d in drawables:
        icon_png().save(root / "res" / "drawable" / f"{d}.png")
    path = layout_dir / name
    path.write_text(layout, encoding="utf-8")
    return path


@pytest.fixture
def project(tmp_path):
    make_project(tmp_path / "app")
    return tmp_path / "app"


@pytest.fixture
def mock_factory():
    servers = []

    def start(fixture):
        server = MockBackend(fixture).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.stop()


@pytest.fixture
def client_for():
    clients = []

    def make(server, **overrides):
        cfg = BackendConfig(endpoint=server.url, **{"backoff": 0.01, **overrides})
        c = ChatClient(cfg)
        clients.append(c)
        return c

    yield make
    for c in clients:
        c.close()


@pytest.fixture
def cache(tmp_path):
    return ResultCache(tmp_path / "cache")


# -- acceptance reporting ---------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    results = item.config._criteria.setdefault(number, {"title": title, "status": []})
    if report.when == "call" or not report.passed:
        results["status"].append("SKIP" if report.skipped else "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        entry = criteria[number]
        statuses = [s for s in entry["status"] if s != "SKIP"] or entry["status"]
        verdict = "FAIL" if "FAIL" in statuses else statuses[0] if statuses else "SKIP"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {entry['title']}")
