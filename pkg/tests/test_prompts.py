from orthocal import prompts


def test_waterbird_manifest_shape():
    m = prompts.waterbird_manifest()
    assert len(m.indices_with_role("class")) == 2
    assert len(m.indices_with_role("spurious")) == 8
    # 5 variants per class, all unordered pairs: 2 * C(5,2) = 20
    assert len(m.indices_with_role("pair_left")) == 20
    assert len(m.indices_with_role("pair_right")) == 20
    assert m.labels_for_role("class") == ["landbird", "waterbird"]
    spurious_labels = set(m.labels_for_role("spurious"))
    assert spurious_labels == {"land", "water"}


def test_celeba_manifest_shape():
    m = prompts.celeba_manifest()
    assert len(m.indices_with_role("class")) == 2
    assert len(m.indices_with_role("spurious")) == 6
    assert len(m.indices_with_role("pair_left")) == 2
    texts = [e.text for e in m.entries if e.role == "pair_left"]
    assert all("male celebrity" in t for t in texts)


def test_fairface_queries():
    m = prompts.fairface_query_manifest()
    queries = [m.entries[i].text for i in m.indices_with_role("query")]
    assert len(queries) == 10
    assert "A photo of a smart person." in queries
    assert all(t.startswith("A photo of a") and t.endswith("person.") for t in queries)


def test_profession_split_sizes_and_disjoint():
    train, test = prompts.profession_split()
    assert len(train) == 80
    assert len(test) == 20
    assert not set(train) & set(test)
    assert "Doctor" in train and "Firefighter" in test


def test_generative_pair_manifest_gender():
    m = prompts.generative_pair_manifest("gender", "train")
    assert len(m.indices_with_role("pair_left")) == 80  # one pair per profession
    left = m.entries[m.indices_with_role("pair_left")[0]]
    right = m.entries[m.indices_with_role("pair_right")[0]]
    assert left.pair_id == right.pair_id
    assert left.text.replace("male", "") == right.text.replace("female", "")


def test_generative_pair_manifest_race_enumerates_combinations():
    m = prompts.generative_pair_manifest("race", "test")
    # 5 attributes -> C(5,2) = 10 pairs per profession, 20 test professions
    assert len(m.indices_with_role("pair_left")) == 200


def test_attribute_prompt_manifest():
    m = prompts.attribute_prompt_manifest("gender")
    assert m.labels_for_role("attribute") == ["male", "female"]
    assert m.entries[0].text == "A photo of a male person."
    race = prompts.attribute_prompt_manifest("race")
    assert len(race.entries) == 5
    assert "A photo of an Asian person." in [e.text for e in race.entries]


def test_target_prompt_manifest_articles():
    m = prompts.target_prompt_manifest("test")
    texts = [e.text for e in m.entries]
    assert len(texts) == 20
    assert "A photo of an accountant." in texts
    assert "A photo of a firefighter." in texts


def test_unknown_family_rejected():
    import pytest

    with pytest.raises(ValueError, match="unknown attribute family"):
        prompts.generative_pair_manifest("hairstyle", "train")
