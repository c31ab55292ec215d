from memchan.cli import main

main()
