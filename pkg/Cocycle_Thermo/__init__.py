# Package initializer for Cocycle_Thermo (thermodynamic formalism for matrix cocycles)
