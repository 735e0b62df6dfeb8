"""
Training XOR with simulated in-memory arithmetic
================================================

A 2-8-2 ReLU network learns XOR. Every multiply and add of the forward pass,
backward pass and weight update runs bit by bit on simulated subarrays; the
same run with the reference model gives exactly the same losses.
"""

from sotpim.workload import functional_train_tiny

epochs = 60
pim = functional_train_tiny(epochs=epochs, backend="pim")
ref = functional_train_tiny(epochs=epochs, backend="oracle")

for e in range(0, epochs, 10):
    print(f"epoch {e:3d}  loss {pim.losses[e]:.6f}  accuracy {pim.accuracies[e]:.0%}")
print("final accuracy:", pim.final_accuracy)
print("identical to the reference run:", pim.loss_words == ref.loss_words)
