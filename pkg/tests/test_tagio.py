import numpy as np
import pytest

from spsbench.exceptions import FormatError
from spsbench.physics import EmitterConfig
from spsbench.source import PulseTrain, TimeTagStream, simulate_emission
from spsbench.tagio import HEADER, read_header, read_photon_sidecar, read_timetags, write_photon_sidecar, write_timetags


def test_round_trip(tmp_path):
    s = TimeTagStream(3, np.array([1, 5, 2 ** 40]), seed=99, config_hash=b"\x01" * 32)
    p = write_timetags(tmp_path / "t.ptt", s)
    assert p.stat().st_size == HEADER.size + 24
    back = read_timetags(p)
    assert back.channel == 3 and back.seed == 99 and bytes(back.config_hash) == b"\x01" * 32
    assert np.array_equal(back.tags, s.tags)


def test_empty_stream(tmp_path):
    p = write_timetags(tmp_path / "e.ptt", TimeTagStream(0, np.zeros(0, dtype=np.int64)))
    assert read_timetags(p).tags.size == 0


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate", "short"])
def test_malformed_files_raise(tmp_path, mutate):
    p = write_timetags(tmp_path / "t.ptt", TimeTagStream(0, np.arange(1, 10)))
    raw = bytearray(p.read_bytes())
    if mutate == "magic":
        raw[:4] = b"XXXX"
    elif mutate == "version":
        raw[4] = 9
    elif mutate == "truncate":
        raw = raw[:-3]
    else:
        raw = raw[:10]
    p.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_header(p)


def test_sidecar_round_trip(tmp_path):
    ph = simulate_emission(EmitterConfig(gamma_inhom=2.0, leak_rate=0.1), PulseTrain(n_pulses=2000), seed=3)
    doc = read_photon_sidecar(write_photon_sidecar(tmp_path / "p.csv", ph))
    assert np.array_equal(doc["emission_time_ps"], np.rint(ph.emission_time).astype(np.int64))
    assert np.array_equal(doc["pulse_index"], ph.pulse_index)
    assert np.allclose(doc["freq_offset_GHz"], ph.frequency_offset, atol=1e-6)
    assert np.array_equal(doc["origin"], ph.origin)
