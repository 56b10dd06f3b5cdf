from graphfraud.cli import main

main()
