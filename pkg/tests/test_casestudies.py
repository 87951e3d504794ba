import json
from fractions import Fraction

import pytest

import esdp
from esdp import casestudies


def test_case1_break_evens():
    output = casestudies.case1_profit_curves()
    values = [h.value for h in output.headlines]

    assert values == [pytest.approx(600.0), pytest.approx(3000.0), pytest.approx(6000.0)]
    assert output.headlines[0].conversions['min'] == pytest.approx(10.0)


def test_case1_rows():
    output = casestudies.case1_profit_curves([600.0, 0.0, 1200.0])

    assert [row[0] for row in output.rows] == [0.0, 600.0, 1200.0]
    assert output.rows[0][1:] == (10.0, 50.0, 100.0)
    assert output.rows[1][1] == pytest.approx(0.0, abs=1e-12)
    assert output.rows[2][1] == pytest.approx(-10.0)
    assert [c.header for c in output.columns] == [
        'delay(s)', 'profit_ev10(USD)', 'profit_ev50(USD)', 'profit_ev100(USD)',
    ]


def test_case1_rejects_negative_delay():
    with pytest.raises(esdp.ValidationError):
        casestudies.case1_profit_curves([-1.0])


@pytest.mark.parametrize(
    'v_max, delay',
    [
        pytest.param(100.0, 6000.0, id='100'),
        pytest.param(0.0, 0.0, id='zero'),
        pytest.param(50.0, 3000.0, id='50'),
    ],
)
def test_case2(v_max, delay):
    output = casestudies.case2_delay_curve([v_max])
    assert output.rows[0][1] == pytest.approx(delay)


def test_case2_headline():
    headline = casestudies.case2_delay_curve().headlines[0]
    assert headline.value == pytest.approx(6000.0)
    assert headline.conversions['min'] == pytest.approx(100.0)


def test_case3_curve():
    output = casestudies.case3_grinding_curve()
    delays = dict(output.rows)

    assert [int(g) for g in delays] == [2 ** k for k in range(11)]
    assert delays[1.0] == pytest.approx(600.0)
    assert delays[4.0] == pytest.approx(625.0)
    h_1024 = float(sum(Fraction(1, k) for k in range(1, 1025)))
    assert delays[1024.0] == pytest.approx(600 * h_1024 / 32, rel=1e-12)
    assert delays[1024.0] == pytest.approx(140.8, abs=0.1)


def test_case3_is_not_monotone():
    output = casestudies.case3_grinding_curve()
    delays = [row[1] for row in output.rows]
    peak = delays.index(max(delays))

    assert 0 < peak < len(delays) - 1
    assert delays[-1] < delays[0]
    assert output.log_x


def test_case4_ethereum():
    output = casestudies.case4_ethereum()
    small, large = output.headlines

    assert small.value == pytest.approx(271739, abs=1)
    assert small.conversions['days'] == pytest.approx(3.1, abs=0.05)
    assert large.value == pytest.approx(54347826, abs=1)
    assert round(large.conversions['days']) == 629
    assert any('1.65 USD/h' in note for note in output.notes)


def test_case4_zero_reward():
    output = casestudies.case4_ethereum([0.0])
    assert output.rows == ((0.0, 0.0, 0.0),)


def test_run_case_study():
    assert casestudies.run_case_study(2).name == 'case2'
    with pytest.raises(esdp.ValidationError, match='unknown id 9'):
        casestudies.run_case_study(9)


def test_output_rejects_unsorted_rows():
    with pytest.raises(esdp.ValidationError, match='sorted'):
        casestudies.CaseStudyOutput(
            name='bad',
            title='bad',
            columns=(casestudies.Column('x', 's'), casestudies.Column('y', 's')),
            rows=((2.0, 0.0), (1.0, 0.0)),
        )


def test_write_csv(tmp_path):
    output = casestudies.case2_delay_curve([0.0, 50.0])
    path = tmp_path / 'case2.csv'
    output.write_csv(path)

    assert path.read_bytes().split(b'\n')[0] == b'v_max(USD),required_delay(s)'
    assert b'\r' not in path.read_bytes()
    rows = path.read_text().splitlines()[1:]
    assert [tuple(map(float, row.split(','))) for row in rows] == list(output.rows)


def test_to_json():
    data = json.loads(casestudies.case4_ethereum().to_json())

    assert data['name'] == 'case4'
    assert data['columns'][0] == {'name': 'expected_reward', 'unit': 'USD'}
    assert len(data['rows']) == 2
    assert data['headlines'][0]['unit'] == 's'
