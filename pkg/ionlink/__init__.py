"""Module providing a heralded ion-photon entanglement link simulator."""
