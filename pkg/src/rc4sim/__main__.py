from rc4sim.cli import run

run()
