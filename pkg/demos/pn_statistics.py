"""Range correlation of oscillator phase noise, printed as a small table.

The self-referenced PN a monostatic receiver sees grows with the round-trip
delay.  A free-running oscillator keeps growing linearly; a PLL saturates.
Correlation at lag dt vanishes beyond dt = tau for the FRO, not for the PLL.
"""
import numpy as np

from pnradar.frame import OscillatorModel
from pnradar.pn_model import dpn_correlation, dpn_variance

fro = OscillatorModel.fro(200e3)
pll = OscillatorModel.pll(200e3, 1e6)

print("tau [us]   var FRO [rad^2]   var PLL [rad^2]")
for tau in np.array([0.05, 0.2, 0.5, 1.0, 2.0, 5.0]) * 1e-6:
    print(f"{tau * 1e6:7.2f}   {dpn_variance(fro, tau):15.5f}   {dpn_variance(pll, tau):15.5f}")

tau = 1e-6
print(f"\ncorrelation vs lag at tau = {tau * 1e6:g} us")
print("dt [us]    FRO          PLL")
for dt in np.linspace(0, 2e-6, 9):
    print(f"{dt * 1e6:6.2f}  {dpn_correlation(fro, dt, tau):10.5f}  {dpn_correlation(pll, dt, tau):10.5f}")
