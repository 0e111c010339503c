import pytest

from globalhash.workers import map_ordered, resolve_threads, row_chunks


class TestResolveThreads:
    def test_default_is_one(self):
        assert resolve_threads() == 1

    def test_environment_fallback(self, monkeypatch):
        monkeypatch.setenv("GHS_THREADS", "3")
        assert resolve_threads() == 3

    def test_explicit_value_wins(self, monkeypatch):
        monkeypatch.setenv("GHS_THREADS", "3")
        assert resolve_threads(2) == 2

    def test_bad_environment_value_ignored(self, monkeypatch):
        monkeypatch.setenv("GHS_THREADS", "many")
        assert resolve_threads() == 1


class TestPartitioning:
    @pytest.mark.parametrize("n, threads", [(10, 3), (2, 8), (7, 1)])
    def test_chunks_cover_rows_in_order(self, n, threads):
        chunks = row_chunks(n, threads)
        covered = [i for chunk in chunks for i in range(chunk.start, chunk.stop)]
        assert covered == list(range(n))
        assert len(chunks) <= threads

    def test_no_rows(self):
        assert row_chunks(0, 4) == []

    def test_map_keeps_input_order(self):
        assert map_ordered(lambda x: x * x, list(range(20)), threads=4) == [
            x * x for x in range(20)
        ]
