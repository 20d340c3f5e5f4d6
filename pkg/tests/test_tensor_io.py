"""
tests/test_tensor_io.py
Sparse text layout of coincidence tensors.
"""
import numpy as np
import pytest

from weakri_tensor_io import FORMAT_TAG, ROW_COLUMNS, TensorFormatError, read_tensor, write_tensor
from weakri_wmsim import CoincidenceTensor, PixelGrid


@pytest.fixture
def small_tensor():
    grid = PixelGrid(3, 0.5)
    counts = np.zeros(grid.shape, dtype=np.int64)
    counts[0, 1, 2, 0] = 5
    counts[2, 2, 2, 2] = 1
    counts[1, 0, 0, 1] = 12
    return CoincidenceTensor(counts, grid, metadata={'acquisition': 'main', 'seed': 3,
                                                     'angles': {'A1': 0.0, 'A2': 0.785}})


class TestWriteTensor:
    """Header and row layout."""

    def test_header_then_rows(self, small_tensor, tmp_path) -> None:
        path = write_tensor(small_tensor, tmp_path / 'main.txt')
        lines = path.read_text().splitlines()
        header = [line for line in lines if line.startswith('#')]
        body = [line for line in lines if not line.startswith('#')]
        assert f'# format: {FORMAT_TAG}' in header
        assert body[0].split() == ROW_COLUMNS
        assert len(body) == 1 + 3

    def test_only_nonzero_cells_listed(self, small_tensor, tmp_path) -> None:
        path = write_tensor(small_tensor, tmp_path / 'main.txt')
        body = [line.split() for line in path.read_text().splitlines() if not line.startswith('#')]
        assert sorted(int(row[-1]) for row in body[1:]) == [1, 5, 12]
        assert ['0', '1', '2', '0', '5'] in body


class TestReadTensor:
    """Parsing and validation."""

    def test_read_back(self, small_tensor, tmp_path) -> None:
        tensor = read_tensor(write_tensor(small_tensor, tmp_path / 'main.txt'))
        assert np.array_equal(tensor.counts, small_tensor.counts)
        assert tensor.total == 18
        assert tensor.grid == small_tensor.grid
        assert tensor.metadata['acquisition'] == 'main'
        assert tensor.metadata['angles']['A2'] == pytest.approx(0.785)

    def test_empty_tensor(self, tmp_path) -> None:
        grid = PixelGrid(2, 1.0)
        empty = CoincidenceTensor(np.zeros(grid.shape), grid)
        tensor = read_tensor(write_tensor(empty, tmp_path / 'empty.txt'))
        assert tensor.total == 0

    def test_wrong_format_tag(self, small_tensor, tmp_path) -> None:
        path = write_tensor(small_tensor, tmp_path / 'main.txt')
        path.write_text(path.read_text().replace(FORMAT_TAG, 'other/9'))
        with pytest.raises(TensorFormatError, match='expected format'):
            read_tensor(path)

    def test_total_mismatch(self, small_tensor, tmp_path) -> None:
        path = write_tensor(small_tensor, tmp_path / 'main.txt')
        path.write_text(path.read_text().replace('# total: 18', '# total: 19'))
        with pytest.raises(TensorFormatError, match='total'):
            read_tensor(path)

    def test_index_out_of_range(self, tmp_path) -> None:
        path = tmp_path / 'bad.txt'
        path.write_text(f"# format: {FORMAT_TAG}\n# n_pixels: 2\n# pitch: 1.0\n# origin: -0.5\n"
                        "# total: 1\nX_A Y_A X_B Y_B count\n0 0 0 5 1\n")
        with pytest.raises(TensorFormatError, match='outside'):
            read_tensor(path)

    def test_missing_geometry(self, tmp_path) -> None:
        path = tmp_path / 'bad.txt'
        path.write_text(f"# format: {FORMAT_TAG}\n# total: 0\nX_A Y_A X_B Y_B count\n")
        with pytest.raises(TensorFormatError, match='lacks'):
            read_tensor(path)
