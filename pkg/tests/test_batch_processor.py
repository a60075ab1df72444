from histoad.services.batch_processor import BatchProcessor


def test_results_keep_input_order_with_several_workers():
    processor = BatchProcessor(workers=4)
    assert processor.map(lambda x: x * x, list(range(50)), "squares") == [x * x for x in range(50)]
    assert processor.get_batch_status() == {"workers": 4, "processed": {"squares": 50}}


def test_chunks_cover_every_item():
    processor = BatchProcessor(workers=1)
    assert processor.chunks(list(range(7)), 3) == [[0, 1, 2], [3, 4, 5], [6]]
    assert processor.map_chunks(sum, list(range(7)), 3, "sums") == [3, 12, 6]
    processor.map_chunks(sum, list(range(7)), 3, "sums")
    assert processor.get_batch_status()["processed"]["sums"] == 6


def test_worker_count_is_at_least_one():
    processor = BatchProcessor(workers=0)
    assert processor.workers == 1
    processor.configure(-3)
    assert processor.workers == 1


def test_per_call_worker_count_leaves_the_configuration_alone():
    processor = BatchProcessor(workers=1)
    assert processor.map(lambda x: x + 1, [1, 2, 3], "inc", workers=3) == [2, 3, 4]
    assert processor.map_chunks(sum, list(range(6)), 4, "sums", workers=2) == [6, 9]
    assert processor.get_batch_status() == {"workers": 1, "processed": {"inc": 3, "sums": 2}}
