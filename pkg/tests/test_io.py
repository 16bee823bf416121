import gzip
import os
import struct

import numpy as np
import orjson
import pytest
from numpy.testing import assert_allclose

from gencol_mmot.engine import ProgressRecord
from gencol_mmot.errors import InputFormatError
from gencol_mmot.extract import WeightedPointCloud
from gencol_mmot.io import (
    ProgressWriter,
    image_to_marginal,
    pixel_coordinates,
    read_cloud,
    read_csv_cloud,
    read_idx_images,
    read_pgm,
    read_pgm_array,
    read_plan,
    read_potentials,
    write_cloud,
    write_grid,
    write_history,
    write_mask,
    write_plan,
    write_potentials,
    write_run_record,
)
from gencol_mmot.measures import DualPotentials, SparsePlan
from gencol_mmot.types import RunRecord


def write_idx(path, images: np.ndarray, magic: int = 0x803, compress: bool = False):
    n, h, w = images.shape
    payload = struct.pack(">IIII", magic, n, h, w) + images.astype(np.uint8).tobytes()
    path.write_bytes(gzip.compress(payload) if compress else payload)
    return path


@pytest.fixture
def digits():
    images = np.zeros((3, 4, 4), dtype=np.uint8)
    images[0, 0, 0] = 255
    images[1, 1:3, 1:3] = [[10, 30], [20, 40]]
    images[2, 3, :] = 7
    return images


def test_pixel_coordinates():
    coords = pixel_coordinates(2, 4)
    assert coords[0].tolist() == [0.125, 0.75]
    assert coords[3].tolist() == [0.875, 0.75]
    assert coords[4].tolist() == [0.125, 0.25]


class TestIdx:
    def test_reads_images(self, tmp_path, digits):
        path = write_idx(tmp_path / "images-idx3-ubyte", digits)
        marginals = read_idx_images(path)
        assert [m.size for m in marginals] == [1, 4, 4]
        assert marginals[0].points.tolist() == [[0.125, 0.875]]
        assert_allclose(marginals[1].masses, [0.1, 0.3, 0.2, 0.4])
        assert marginals[1].label == "images-idx3-ubyte[1]"

    def test_gzip_and_selection(self, tmp_path, digits):
        path = write_idx(tmp_path / "images-idx3-ubyte.gz", digits, compress=True)
        assert len(read_idx_images(path, count=2)) == 2
        picked = read_idx_images(path, indices=[2])
        assert_allclose(picked[0].masses, np.full(4, 0.25))
        assert_allclose(picked[0].points[:, 1], np.full(4, 0.125))

    def test_bad_magic(self, tmp_path, digits):
        path = write_idx(tmp_path / "bad.idx", digits, magic=0x801)
        with pytest.raises(InputFormatError, match="offset 0"):
            read_idx_images(path)

    def test_truncated(self, tmp_path, digits):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">IIII", 0x803, 3, 4, 4) + bytes(20))
        with pytest.raises(InputFormatError, match="offset 36"):
            read_idx_images(path)

    def test_empty_image(self, tmp_path, digits):
        digits[1] = 0
        path = write_idx(tmp_path / "blank.idx", digits)
        with pytest.raises(InputFormatError, match="image 1: empty measure") as exc_info:
            read_idx_images(path)
        assert exc_info.value.location == "offset 32"

    def test_range_checks(self, tmp_path, digits):
        path = write_idx(tmp_path / "d.idx", digits)
        with pytest.raises(ValueError):
            read_idx_images(path, count=4)
        with pytest.raises(ValueError):
            read_idx_images(path, indices=[3])


class TestPgm:
    def test_ascii_dirac(self, tmp_path):
        path = tmp_path / "dot.pgm"
        path.write_text("P2\n# one bright pixel\n3 2\n255\n0 0 0\n0 9 0\n")
        m = read_pgm(path)
        assert m.label == "dot"
        assert m.points.tolist() == [[0.5, 0.25]]
        assert m.masses.tolist() == [1.0]

    def test_binary_sixteen_bit(self, tmp_path):
        path = tmp_path / "wide.pgm"
        pixels = np.array([[0, 1000], [3000, 0]], dtype=">u2")
        path.write_bytes(b"P5\n2 2\n4000\n" + pixels.tobytes())
        assert read_pgm_array(path).tolist() == [[0, 1000], [3000, 0]]

    def test_not_pgm(self, tmp_path):
        path = tmp_path / "x.pgm"
        path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with pytest.raises(InputFormatError, match="offset 0"):
            read_pgm_array(path)

    def test_blank_image(self, tmp_path):
        path = tmp_path / "blank.pgm"
        path.write_text("P2 2 2 255 0 0 0 0")
        with pytest.raises(InputFormatError, match="empty measure"):
            read_pgm(path)


def test_image_to_marginal_rejects_negative():
    with pytest.raises(InputFormatError):
        image_to_marginal(np.array([[1.0, -1.0]]))


class TestCsvCloud:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "cloud.csv"
        path.write_text("x,y,mass\n0.0,0.0,0.25\n1.0,0.5,0.75\n")
        m = read_csv_cloud(path)
        assert m.points.tolist() == [[0.0, 0.0], [1.0, 0.5]]
        assert m.masses.tolist() == [0.25, 0.75]

    def test_negative_mass_names_line(self, tmp_path):
        path = tmp_path / "neg.csv"
        path.write_text("x,mass\n0.0,0.5\n1.0,-0.5\n")
        with pytest.raises(InputFormatError, match="line 3"):
            read_csv_cloud(path)

    def test_normalize(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("0.0,2\n1.0,6\n")
        with pytest.raises(InputFormatError):
            read_csv_cloud(path)
        assert read_csv_cloud(path, normalize=True).masses.tolist() == [0.25, 0.75]

    def test_ragged(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("0.0,0.5\n1.0,2.0,0.5\n")
        with pytest.raises(InputFormatError, match="line 2"):
            read_csv_cloud(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("x,mass\n")
        with pytest.raises(InputFormatError, match="empty measure"):
            read_csv_cloud(path)

    def test_non_numeric_after_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,mass\n0.0,0.5\nabc,0.5\n")
        with pytest.raises(InputFormatError, match="line 3"):
            read_csv_cloud(path)


def test_plan_file_round_trip(tmp_path):
    plan = SparsePlan({(2, 0, 1): 0.125, (0, 1, 1): 0.5, (1, 1, 0): 0.375}, (3, 2, 2))
    path = write_plan(plan, tmp_path / "plan.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "i1,i2,i3,mass"
    assert lines[1] == "0,1,1,5.0000000000000000e-01"
    assert dict(read_plan(path, plan.shape).entries) == dict(plan.entries)
    assert read_plan(path).shape == (3, 2, 2)


def test_plan_rejects_duplicates(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("i1,i2,mass\n0,0,0.5\n0,0,0.5\n")
    with pytest.raises(InputFormatError, match="line 3"):
        read_plan(path)


def test_cloud_file_keeps_every_digit(tmp_path):
    cloud = WeightedPointCloud(np.array([[0.1, 1 / 3], [2.0, -0.7]]), np.array([0.3, 0.7]))
    back = read_cloud(write_cloud(cloud, tmp_path / "cloud.csv"))
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.masses, cloud.masses)


def test_potentials_file(tmp_path):
    u = DualPotentials((np.array([1.5, -2.0]), np.array([0.0, 1 / 3, 4.0])))
    back = read_potentials(write_potentials(u, tmp_path / "u.csv"))
    assert back.shape == (2, 3)
    assert back.u[1].tolist() == u.u[1].tolist()


def test_potentials_need_contiguous_marginals(tmp_path):
    path = tmp_path / "u.csv"
    path.write_text("k,index,value\n1,0,0.5\n3,0,1.0\n")
    with pytest.raises(InputFormatError, match="not 1..N"):
        read_potentials(path)


class TestRasterFiles:
    def test_grid_peak_is_full_scale(self, tmp_path):
        grid = np.array([[0.0, 0.1], [0.4, 0.2]])
        pgm, scale = write_grid(grid, tmp_path / "bary.pgm")
        pixels = read_pgm_array(pgm)
        assert pixels.tolist() == [[16384, 32768], [0, 65535]]
        assert scale.name == "bary.scale.txt"
        assert scale.read_text() == "pixel_max=65535\nmass_at_pixel_max=4.0000000000000002e-01\n"

    def test_grid_orientation(self, tmp_path):
        grid = np.zeros((3, 2))
        grid[2, 1] = 1.0
        pixels = read_pgm_array(write_grid(grid, tmp_path / "g.pgm")[0])
        assert pixels.shape == (2, 3)
        assert pixels[0, 2] == 65535

    def test_negative_grid(self, tmp_path):
        with pytest.raises(ValueError):
            write_grid(np.array([[-1.0, 1.0]]), tmp_path / "neg.pgm")

    def test_mask(self, tmp_path):
        mask = np.array([[True, False], [False, False]])
        pixels = read_pgm_array(write_mask(mask, tmp_path / "m.pgm"))
        assert pixels.tolist() == [[0, 0], [255, 0]]


def test_history_and_progress(tmp_path):
    write_history([(0, 1.5), (1, 1.25)], tmp_path / "history.csv")
    assert (tmp_path / "history.csv").read_text().splitlines() == [
        "iteration,objective",
        "0,1.5000000000000000e+00",
        "1,1.2500000000000000e+00",
    ]
    with ProgressWriter(tmp_path / "progress.csv") as progress:
        progress(ProgressRecord(iteration=0, omega_size=10, support_size=4, objective=2.0, accepted=0))
    lines = (tmp_path / "progress.csv").read_text().splitlines()
    assert lines == ["iteration,omega_size,support_size,objective,accepted", "0,10,4,2.0000000000000000e+00,0"]


def test_run_record_is_sorted_json(tmp_path):
    record = RunRecord(command="solve", final_objective=0.25, extra={"b": 1, "a": np.float64(2.0)})
    path = write_run_record(record, tmp_path / "run.json")
    data = orjson.loads(path.read_bytes())
    assert data["command"] == "solve"
    assert list(data) == sorted(data)
    assert path.read_bytes().endswith(b"}\n")


@pytest.mark.skipif("GENCOL_MNIST_PATH" not in os.environ, reason="set GENCOL_MNIST_PATH to an MNIST image file")
def test_real_mnist_digits():
    marginals = read_idx_images(os.environ["GENCOL_MNIST_PATH"], indices=[0, 1, 2, 3])
    assert len(marginals) == 4
    for m in marginals:
        assert 0 < m.size <= 28 * 28
        assert m.masses.sum() == pytest.approx(1.0)
        assert m.points.min() > 0.0
        assert m.points.max() < 1.0
