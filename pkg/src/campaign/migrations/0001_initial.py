from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='Campaign',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('label', models.CharField(blank=True, max_length=255)),
                ('config', models.JSONField()),
                ('seed', models.IntegerField(default=0)),
                ('repetitions', models.PositiveIntegerField(default=1)),
                ('output_dir', models.CharField(max_length=1024)),
                ('status', models.IntegerField(choices=[(0, 'pending'), (1, 'running'), (2, 'done'), (3, 'done with failures'), (4, 'failed')], default=0)),
            ],
        ),
        migrations.CreateModel(
            name='Episode',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('route_id', models.CharField(max_length=255)),
                ('scenario_id', models.CharField(blank=True, max_length=255, null=True)),
                ('repetition', models.PositiveIntegerField()),
                ('seed', models.IntegerField()),
                ('status', models.IntegerField(choices=[(0, 'pending'), (1, 'done'), (2, 'failed')], default=0)),
                ('trace_path', models.CharField(blank=True, max_length=1024)),
                ('terminated_by', models.CharField(blank=True, max_length=32)),
                ('frames', models.PositiveIntegerField(default=0)),
                ('driving_score', models.FloatField(null=True)),
                ('success', models.BooleanField(null=True)),
                ('detail', models.TextField(blank=True)),
                ('campaign', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='episodes', to='campaign.campaign')),
            ],
            options={
                'ordering': ['repetition', 'route_id'],
            },
        ),
        migrations.AddConstraint(
            model_name='episode',
            constraint=models.UniqueConstraint(fields=('campaign', 'route_id', 'scenario_id', 'repetition'), name='unique_episode_per_repetition'),
        ),
    ]
