"""HTTP service surface over the pipeline."""

import pytest
from fastapi.testclient import TestClient

from floodwatch import __version__
from floodwatch.service import create_app

BURST_WINDOW = ("2021-09-19T00:00:00Z", "2021-09-27T00:00:00Z")
QUIET_WINDOW = ("2021-09-18T00:00:00Z", "2021-09-26T00:00:00Z")


@pytest.fixture()
def client():
    return TestClient(create_app())


def monitor_payload(event_fixture, out_dir, window):
    return {"config_path": str(event_fixture["config"]),
            "window_start": window[0], "window_end": window[1],
            "out_dir": str(out_dir)}


class TestHealth:
    def test_health(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        body = response.json()
        assert body["status"] == "ok"
        assert body["version"] == __version__


class TestMonitor:
    def test_burst_window_fires(self, client, event_fixture, tmp_path):
        response = client.post("/v1/monitor", json=monitor_payload(
            event_fixture, tmp_path, BURST_WINDOW))
        assert response.status_code == 200
        body = response.json()
        assert body["fired"] is True
        assert body["bucket_index"] == event_fixture["burst_bucket"]
        assert body["observed"] == event_fixture["series"][-1]
        assert (tmp_path / "counts.csv").exists()
        assert (tmp_path / "trigger.json").exists()

    def test_quiet_window_does_not_fire(self, client, event_fixture,
                                        tmp_path):
        response = client.post("/v1/monitor", json=monitor_payload(
            event_fixture, tmp_path, QUIET_WINDOW))
        assert response.status_code == 200
        body = response.json()
        assert body["fired"] is False
        assert body["bucket_index"] is None

    def test_bad_config_path_is_client_error(self, client, tmp_path):
        response = client.post("/v1/monitor", json={
            "config_path": str(tmp_path / "absent.yaml"),
            "window_start": BURST_WINDOW[0],
            "window_end": BURST_WINDOW[1]})
        assert response.status_code == 400

    def test_bad_window_is_client_error(self, client, event_fixture,
                                        tmp_path):
        payload = monitor_payload(event_fixture, tmp_path, BURST_WINDOW)
        payload["window_end"] = payload["window_start"]
        response = client.post("/v1/monitor", json=payload)
        assert response.status_code == 400


class TestRun:
    def run_payload(self, event_fixture, out_dir, **kw):
        payload = monitor_payload(event_fixture, out_dir, BURST_WINDOW)
        payload.update(kw)
        return payload

    def test_full_run_matches_ground_truth(self, client, event_fixture,
                                           tmp_path):
        response = client.post("/v1/run", json=self.run_payload(
            event_fixture, tmp_path, threads=2))
        assert response.status_code == 200
        body = response.json()
        assert body["fired"] is True
        funnel = {row["label"]: row["count"] for row in body["funnel"]}
        assert funnel == event_fixture["funnel"]
        assert body["resolutions"] == event_fixture["geoloc"]["base_total"]
        expansion = body["expansion"]
        assert expansion["new_keywords"] == \
            event_fixture["expansion"]["keywords"]
        assert expansion["extended_resolutions"] == \
            event_fixture["expansion"]["extended_total"]

    def test_quiet_window_conflicts_without_force(self, client,
                                                  event_fixture, tmp_path):
        payload = monitor_payload(event_fixture, tmp_path, QUIET_WINDOW)
        response = client.post("/v1/run", json=payload)
        assert response.status_code == 409
        assert "--force" in response.json()["detail"]

    def test_force_runs_quiet_window(self, client, event_fixture, tmp_path):
        payload = monitor_payload(event_fixture, tmp_path, QUIET_WINDOW)
        payload["force"] = True
        response = client.post("/v1/run", json=payload)
        assert response.status_code == 200
        assert response.json()["fired"] is False

    def test_skip_expansion_omits_expansion_block(self, client,
                                                  event_fixture, tmp_path):
        payload = self.run_payload(event_fixture, tmp_path,
                                   skip_expansion=True)
        response = client.post("/v1/run", json=payload)
        assert response.status_code == 200
        assert response.json()["expansion"] is None

    def test_thread_count_validated(self, client, event_fixture, tmp_path):
        payload = self.run_payload(event_fixture, tmp_path, threads=0)
        assert client.post("/v1/run", json=payload).status_code == 422


class TestExpand:
    def test_expand_without_prior_run_conflicts(self, client, event_fixture,
                                                tmp_path):
        response = client.post("/v1/expand", json={
            "config_path": str(event_fixture["config"]),
            "out_dir": str(tmp_path / "never_ran")})
        assert response.status_code == 409

    def test_expand_after_run(self, client, event_fixture, tmp_path):
        run_payload = monitor_payload(event_fixture, tmp_path, BURST_WINDOW)
        assert client.post("/v1/run", json=run_payload).status_code == 200
        response = client.post("/v1/expand", json={
            "config_path": str(event_fixture["config"]),
            "out_dir": str(tmp_path)})
        assert response.status_code == 200
        body = response.json()
        assert body["new_keywords"] == event_fixture["expansion"]["keywords"]
        assert body["base_resolutions"] == \
            event_fixture["geoloc"]["base_total"]
        assert body["extended_resolutions"] == \
            event_fixture["expansion"]["extended_total"]


class TestReport:
    def test_demo_report(self, client):
        response = client.post("/v1/report", json={"demo": True})
        assert response.status_code == 200
        body = response.json()
        assert "4,145,447" in body["funnel"]
        assert "1,265" in body["admin_histogram"]
        assert "GloFAS" in body["timeline"]

    def test_report_needs_a_source(self, client):
        assert client.post("/v1/report", json={}).status_code == 400

    def test_report_from_run_artifacts(self, client, event_fixture,
                                       tmp_path):
        run_payload = monitor_payload(event_fixture, tmp_path, BURST_WINDOW)
        assert client.post("/v1/run", json=run_payload).status_code == 200
        response = client.post("/v1/report", json={"out_dir": str(tmp_path)})
        assert response.status_code == 200
        body = response.json()
        assert "All posts" in body["funnel"]
        assert "floodwatch" in body["timeline"]

    def test_report_missing_artifacts_not_found(self, client, tmp_path):
        response = client.post("/v1/report",
                               json={"out_dir": str(tmp_path / "empty")})
        assert response.status_code == 404
